"""Koopman operator fitting and worst-case robustness bounds for
black-box sequential decision policies."""

__version__ = "0.1.0"

from .trajectory_data import (
    STATE_ACTION,
    STATE_SHIFTED,
    MeanTrajectory,
    SnapshotPair,
    Trajectory,
    TrajectoryEnsemble,
    build_action_pairs,
    build_state_snapshots,
    concat_ensembles,
    ensemble_mean,
    load_trajectories,
    mean_rewards,
    save_trajectories,
)
from .koopman_dmd import (
    DEFAULT_RANK_TOL,
    DmdResult,
    KoopmanModel,
    action_fit_residual,
    dmd_exact,
    dmd_standard,
    fit_action_operator,
    fit_koopman_model,
    fit_state_operator,
    load_model,
    model_from_dict,
    model_to_dict,
    predict,
    save_model,
)
from .hinf_spectral import (
    CONSTANT,
    RESOLVENT,
    HinfReport,
    TransferFunction,
    frequency_response,
    hinf_norm,
    spectral_radius,
)
from .bounds import (
    DISTURBANCE_KINDS,
    AdmissibilityResult,
    BoundInputs,
    BoundReport,
    DisturbanceSpec,
    RewardDescriptor,
    action_deviation_bounds,
    disturbance_admissible,
    estimate_C,
    estimate_lipschitz,
    estimate_Q,
    generalization_error_bound,
    generate_disturbance,
    load_report,
    per_step_table,
    reward_impact_bound,
    save_report,
    state_deviation_bounds,
    verify_bounds,
    write_per_step_table,
)
from .env_sim import (
    FAIRNESS_MODES,
    POLICY_KINDS,
    GuState,
    LinearSurrogateConfig,
    ScriptedPolicy,
    UavEnvConfig,
    UavState,
    downlink_rate,
    fairness_index,
    linear_ensemble,
    linear_rollout,
    norm_penalty_reward,
    path_loss,
    scripted_policy,
    serve_set,
    step_gu_motion,
    uav_ensemble,
    uav_reward,
    uav_rollout,
)
from .errors import (
    DataError,
    DegenerateInputError,
    DimensionMismatchError,
    DivergenceError,
    EmptyInputError,
    InsufficientDataError,
    KoopboundError,
    ParameterError,
    ParseError,
    PoleProximityError,
    SchemaError,
)
