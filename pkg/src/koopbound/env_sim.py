"""Trajectory generators with scripted policies.

Two environments feed the analysis pipeline.  The linear closed-loop
surrogate has analytically known transition and policy matrices, so fitted
operators and bound checks can be validated against ground truth.  The UAV
coverage environment simulates a single mmWave-serving UAV chasing mobile
ground users over a bounded service area, with link-budget based service
decisions and a coverage/fairness reward.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from typing import Callable, Mapping

import numpy as np

from .errors import DataError, DimensionMismatchError, ParameterError
from .trajectory_data import Trajectory, TrajectoryEnsemble

SPEED_OF_LIGHT = 299_792_458.0

POLICY_KINDS = ("centroid_greedy", "lagged_centroid")
FAIRNESS_MODES = ("as_written", "standard")

# Exponential smoothing weight of the lagged policy's target.
_LAG_SMOOTHING = 0.5
# Slack on the per-step UAV displacement check, float round-off only.
_SPEED_EPS = 1e-9


# ---------------------------------------------------------------------------
# Linear closed-loop surrogate
# ---------------------------------------------------------------------------


def norm_penalty_reward(x_next: np.ndarray, u: np.ndarray) -> float:
    """Default surrogate reward -|x| - 0.1|u|; Lipschitz constant 1."""
    return -float(np.linalg.norm(x_next)) - 0.1 * float(np.linalg.norm(u))


@dataclass(frozen=True)
class LinearSurrogateConfig:
    """Closed loop x' = A x + eta + w with deterministic policy u = F x.

    eta is i.i.d. Gaussian per component with noise_std (zero disables the
    draw entirely, keeping runs bit-deterministic).  The per-step reward is
    reward_fn(x_{k+1}, u_k) with the stated Lipschitz constant.
    """

    A: np.ndarray
    F: np.ndarray
    x0_mean: np.ndarray
    horizon: int
    seed: int = 0
    noise_std: float = 0.0
    reward_fn: Callable[[np.ndarray, np.ndarray], float] = norm_penalty_reward
    reward_lipschitz: float = 1.0

    def __post_init__(self):
        a = np.array(self.A, dtype=float)
        f = np.array(self.F, dtype=float)
        x0 = np.array(self.x0_mean, dtype=float).reshape(-1)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DimensionMismatchError(f"A must be square, got shape {a.shape}")
        if f.ndim != 2 or f.shape[1] != a.shape[0]:
            raise DimensionMismatchError(
                f"F must be m x n with n={a.shape[0]}, got shape {f.shape}"
            )
        if x0.shape[0] != a.shape[0]:
            raise DimensionMismatchError(
                f"x0_mean has dimension {x0.shape[0]}, expected {a.shape[0]}"
            )
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(f)) and np.all(np.isfinite(x0))):
            raise DataError("non-finite entry in surrogate configuration")
        if self.horizon < 1:
            raise ParameterError("horizon must be at least 1")
        if self.noise_std < 0:
            raise ParameterError("noise_std must be non-negative")
        for name, arr in (("A", a), ("F", f), ("x0_mean", x0)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.F.shape[0]

    @classmethod
    def from_flat(
        cls, cfg: Mapping, horizon: int, seed: int, prefix: str = "linear."
    ) -> "LinearSurrogateConfig":
        try:
            a = cfg[prefix + "A"]
            f = cfg[prefix + "F"]
            x0 = cfg[prefix + "x0"]
        except KeyError as exc:
            raise ParameterError(f"config is missing key {exc.args[0]!r}") from None
        return cls(
            A=np.array(a, dtype=float),
            F=np.array(f, dtype=float),
            x0_mean=np.array(x0, dtype=float),
            horizon=horizon,
            seed=seed,
            noise_std=float(cfg.get(prefix + "noise_std", 0.0)),
        )


def _check_disturbance(disturbance, horizon: int, dim: int) -> np.ndarray | None:
    if disturbance is None:
        return None
    w = np.asarray(disturbance, dtype=float)
    if w.shape != (horizon, dim):
        raise DimensionMismatchError(
            f"disturbance has shape {w.shape}, expected ({horizon}, {dim})"
        )
    if not np.all(np.isfinite(w)):
        raise DataError("non-finite entry in disturbance")
    return w


def linear_rollout(
    config: LinearSurrogateConfig, disturbance: np.ndarray | None = None
) -> Trajectory:
    """One surrogate run; deterministic when noise_std is zero and no
    disturbance is given."""
    w = _check_disturbance(disturbance, config.horizon, config.n)
    rng = np.random.default_rng(config.seed)
    states = np.empty((config.horizon + 1, config.n))
    actions = np.empty((config.horizon, config.m))
    rewards = np.empty(config.horizon)
    states[0] = config.x0_mean
    for k in range(config.horizon):
        u = config.F @ states[k]
        x_next = config.A @ states[k]
        if config.noise_std > 0.0:
            x_next = x_next + rng.normal(0.0, config.noise_std, size=config.n)
        if w is not None:
            x_next = x_next + w[k]
        actions[k] = u
        states[k + 1] = x_next
        rewards[k] = config.reward_fn(x_next, u)
    return Trajectory(
        run_id=0, states=states, actions=actions, rewards=rewards, seed=config.seed
    )


def linear_ensemble(
    config: LinearSurrogateConfig,
    runs: int,
    master_seed: int | None = None,
    disturbance: np.ndarray | None = None,
) -> TrajectoryEnsemble:
    """Independent runs with per-run seed master_seed + run index.

    The same disturbance sequence is shared by every run, matching the
    premise that the domain change itself is common across realizations.
    """
    if runs < 1:
        raise ParameterError("runs must be at least 1")
    base = config.seed if master_seed is None else master_seed
    trajectories = []
    for r in range(runs):
        t = linear_rollout(replace(config, seed=base + r), disturbance)
        trajectories.append(replace(t, run_id=r))
    return TrajectoryEnsemble(trajectories=tuple(trajectories))


# ---------------------------------------------------------------------------
# UAV coverage environment
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class UavEnvConfig:
    """Physical and reward parameters of the UAV coverage environment.

    Defaults are the baseline simulation values: 100x100 m area, 20 ground
    users, 30 m altitude, 0.1 s steps, 30 m/s UAV speed cap, 50 m coverage
    radius, 3 m/s mean user speed, 400 MHz bandwidth, 0.2512 W transmit
    power, 30 GHz carrier, -85 dBm noise power, 150 Mb/s rate floor.
    """

    area_x: float = 100.0
    area_y: float = 100.0
    gu_count: int = 20
    altitude: float = 30.0
    step_seconds: float = 0.1
    uav_max_speed: float = 30.0
    coverage_radius: float = 50.0
    gu_mean_speed: float = 3.0
    gu_speed_std: float = 0.65
    gu_keep_direction: float = 0.65   # probability of keeping the heading
    gu_speed_memory: float = 0.65     # weight of the previous speed
    gu_turn_bias: float = 0.0         # radians added when the heading is kept
    bandwidth_hz: float = 400e6
    power_watt: float = 0.2512
    frequency_hz: float = 30e9
    noise_watt: float = 10.0 ** (-11.5)   # -85 dBm
    min_rate: float = 150e6
    absorption: float = 0.0           # molecular absorption, 1/m
    gain_uav: float = 1.0
    gain_gu: float = 1.0
    coverage_weight: float = 0.5      # balance between served count and fairness
    speed_penalty: float = -1.0       # added once per step with a speed violation
    fairness_mode: str = "as_written"

    def __post_init__(self):
        positive = (
            "area_x", "area_y", "gu_count", "altitude", "step_seconds",
            "uav_max_speed", "coverage_radius", "gu_mean_speed",
            "bandwidth_hz", "power_watt", "frequency_hz", "noise_watt",
            "min_rate", "gain_uav", "gain_gu",
        )
        for name in positive:
            if getattr(self, name) <= 0:
                raise ParameterError(f"{name} must be positive")
        for name in ("gu_speed_std", "absorption"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be non-negative")
        for name in ("gu_keep_direction", "gu_speed_memory", "coverage_weight"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ParameterError(f"{name} must lie in [0, 1]")
        if self.fairness_mode not in FAIRNESS_MODES:
            raise ParameterError(
                f"fairness_mode must be one of {FAIRNESS_MODES}, got {self.fairness_mode!r}"
            )

    @property
    def state_dim(self) -> int:
        return 2 * self.gu_count + 2

    @classmethod
    def from_flat(cls, cfg: Mapping, prefix: str = "env.") -> "UavEnvConfig":
        kwargs = {}
        for f in fields(cls):
            key = prefix + f.name
            if key in cfg:
                value = cfg[key]
                if f.name == "gu_count":
                    value = int(value)
                elif f.name != "fairness_mode":
                    value = float(value)
                kwargs[f.name] = value
        return cls(**kwargs)


@dataclass(frozen=True)
class GuState:
    """One ground user: planar position, speed, heading."""

    x: float
    y: float
    speed: float
    heading: float


@dataclass(frozen=True)
class UavState:
    """UAV planar position (fixed altitude) plus all ground users."""

    uav_xy: np.ndarray
    gus: tuple[GuState, ...]
    k: int = 0

    def gu_positions(self) -> np.ndarray:
        return np.array([[g.x, g.y] for g in self.gus], dtype=float)

    def state_vector(self) -> np.ndarray:
        return np.concatenate([self.gu_positions().ravel(), np.asarray(self.uav_xy, dtype=float)])


def _reflect_scalar(value: float, heading: float, limit: float, axis: str) -> tuple[float, float]:
    while value < 0.0 or value > limit:
        if value < 0.0:
            value = -value
        else:
            value = 2.0 * limit - value
        heading = math.pi - heading if axis == "x" else -heading
    return value, heading % (2.0 * math.pi)


def step_gu_motion(gu: GuState, config: UavEnvConfig, rng: np.random.Generator) -> GuState:
    """Advance one ground user by one step.

    Speed follows a mean-reverting update with Gaussian jitter, clamped at
    zero.  The heading is kept (plus the configured turn bias) with
    probability gu_keep_direction, otherwise redrawn uniformly.  The position
    advances along the heading and reflects off the area walls.
    """
    nu = rng.normal(0.0, config.gu_speed_std) if config.gu_speed_std > 0 else 0.0
    keep = rng.random()
    fresh = rng.uniform(0.0, 2.0 * math.pi)
    h1 = config.gu_speed_memory
    speed = max(0.0, h1 * gu.speed + (1.0 - h1) * config.gu_mean_speed + nu)
    heading = (gu.heading + config.gu_turn_bias) if keep < config.gu_keep_direction else fresh
    x = gu.x + config.step_seconds * speed * math.cos(heading)
    y = gu.y + config.step_seconds * speed * math.sin(heading)
    x, heading = _reflect_scalar(x, heading, config.area_x, "x")
    y, heading = _reflect_scalar(y, heading, config.area_y, "y")
    return GuState(x=x, y=y, speed=speed, heading=heading)


def _step_gu_arrays(pos, speeds, headings, config, rng):
    """Vectorized GU update used by rollouts; same physics as step_gu_motion."""
    j = len(speeds)
    nu = rng.normal(0.0, config.gu_speed_std, size=j) if config.gu_speed_std > 0 else 0.0
    keep = rng.random(size=j)
    fresh = rng.uniform(0.0, 2.0 * math.pi, size=j)
    h1 = config.gu_speed_memory
    speeds = np.maximum(0.0, h1 * speeds + (1.0 - h1) * config.gu_mean_speed + nu)
    headings = np.where(
        keep < config.gu_keep_direction, headings + config.gu_turn_bias, fresh
    )
    pos = pos + config.step_seconds * speeds[:, None] * np.column_stack(
        [np.cos(headings), np.sin(headings)]
    )
    for axis, limit in ((0, config.area_x), (1, config.area_y)):
        while True:
            below = pos[:, axis] < 0.0
            above = pos[:, axis] > limit
            if not (below.any() or above.any()):
                break
            pos[below, axis] = -pos[below, axis]
            pos[above, axis] = 2.0 * limit - pos[above, axis]
            flipped = below | above
            if axis == 0:
                headings[flipped] = np.pi - headings[flipped]
            else:
                headings[flipped] = -headings[flipped]
    return pos, speeds, headings % (2.0 * math.pi)


def path_loss(d: float, config: UavEnvConfig) -> float:
    """Channel coefficient at distance d: free-space propagation times
    molecular absorption exp(-absorption * d / 2)."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ParameterError("path loss is singular at zero distance")
    propagation = (
        SPEED_OF_LIGHT
        * math.sqrt(config.gain_uav * config.gain_gu)
        / (4.0 * math.pi * config.frequency_hz * d)
    )
    attenuation = np.exp(-0.5 * config.absorption * d)
    result = propagation * attenuation
    return float(result) if result.ndim == 0 else result


def downlink_rate(bandwidth_hz: float, h_g, config: UavEnvConfig):
    """Achievable rate bandwidth * log2(1 + P |h|^2 / N0) in bits/s."""
    if bandwidth_hz <= 0:
        raise ParameterError("bandwidth must be positive")
    h_g = np.asarray(h_g, dtype=float)
    snr = config.power_watt * h_g * h_g / config.noise_watt
    result = bandwidth_hz * np.log2(1.0 + snr)
    return float(result) if result.ndim == 0 else result


def _serve_mask(uav_xy: np.ndarray, gu_xy: np.ndarray, config: UavEnvConfig) -> np.ndarray:
    """Equal-split service selection.

    Users within the coverage radius (3-d distance) split the bandwidth
    equally; users whose resulting rate misses the floor are dropped and the
    split is recomputed until every survivor meets it.
    """
    diff = gu_xy - uav_xy[None, :]
    d3 = np.sqrt(np.sum(diff * diff, axis=1) + config.altitude**2)
    active = d3 <= config.coverage_radius
    for _ in range(config.gu_count):
        count = int(active.sum())
        if count == 0:
            break
        share = config.bandwidth_hz / count
        rates = downlink_rate(share, path_loss(d3[active], config), config)
        ok = rates >= config.min_rate
        if np.all(ok):
            break
        idx = np.flatnonzero(active)
        active[idx[~ok]] = False
    return active


def serve_set(state: UavState, config: UavEnvConfig) -> np.ndarray:
    """Service indicator per ground user (0/1) at the given state."""
    return _serve_mask(
        np.asarray(state.uav_xy, dtype=float), state.gu_positions(), config
    ).astype(int)


def fairness_index(s, mode: str = "as_written") -> float:
    """Evenness of the service indicators.

    as_written uses the (sum s)^2 / (J^2 sum s^2) form; standard uses the
    conventional J denominator so that full service scores 1.  Both return 0
    when nobody is served.
    """
    if mode not in FAIRNESS_MODES:
        raise ParameterError(f"mode must be one of {FAIRNESS_MODES}, got {mode!r}")
    s = np.asarray(s, dtype=float)
    j = s.size
    total = float(s.sum())
    if total == 0.0:
        return 0.0
    square_sum = float(np.sum(s * s))
    denom = j * j if mode == "as_written" else j
    return total * total / (denom * square_sum)


def uav_reward(s, fairness: float, speed_violation: int, config: UavEnvConfig) -> float:
    """Weighted served fraction plus fairness, plus the signed speed penalty."""
    s = np.asarray(s, dtype=float)
    a = config.coverage_weight
    return (
        a * float(s.sum()) / config.gu_count
        + (1.0 - a) * fairness
        + config.speed_penalty * float(speed_violation)
    )


class ScriptedPolicy:
    """Deterministic waypoint policies standing in for trained agents.

    centroid_greedy heads straight for the centroid of the currently
    unserved users; lagged_centroid chases an exponentially smoothed copy of
    that centroid, which makes its closed loop noticeably more sluggish.
    Both clip the step to step_seconds * uav_max_speed, so compliant motion
    never violates the speed limit.
    """

    def __init__(self, kind: str, config: UavEnvConfig):
        if kind not in POLICY_KINDS:
            raise ParameterError(f"policy kind must be one of {POLICY_KINDS}, got {kind!r}")
        self.kind = kind
        self.config = config
        self._smoothed: np.ndarray | None = None

    def reset(self) -> None:
        self._smoothed = None

    def waypoint_arrays(self, uav_xy: np.ndarray, gu_xy: np.ndarray) -> np.ndarray:
        served = _serve_mask(uav_xy, gu_xy, self.config)
        unserved = gu_xy[~served]
        target = unserved.mean(axis=0) if len(unserved) else uav_xy.copy()
        if self.kind == "lagged_centroid":
            if self._smoothed is None:
                self._smoothed = target.copy()
            else:
                self._smoothed = (
                    _LAG_SMOOTHING * self._smoothed + (1.0 - _LAG_SMOOTHING) * target
                )
            target = self._smoothed
        step = target - uav_xy
        dist = float(np.linalg.norm(step))
        max_step = self.config.step_seconds * self.config.uav_max_speed
        if dist > max_step:
            step = step * (max_step / dist)
        return uav_xy + step

    def waypoint(self, state: UavState) -> np.ndarray:
        return self.waypoint_arrays(
            np.asarray(state.uav_xy, dtype=float), state.gu_positions()
        )


def scripted_policy(state: UavState, config: UavEnvConfig, kind: str) -> np.ndarray:
    """Next waypoint for a single state (smoothing state starts fresh)."""
    return ScriptedPolicy(kind, config).waypoint(state)


def uav_rollout(
    config: UavEnvConfig,
    policy_kind: str,
    horizon: int,
    seed: int,
    disturbance: np.ndarray | None = None,
) -> Trajectory:
    """One UAV episode.

    The state vector concatenates all GU planar positions and the UAV planar
    position (2*gu_count + 2 entries); the action is the commanded next
    waypoint.  A disturbance row is added to the post-transition state and
    the result clamped to the service area; the reward sees the clamped
    state, including any disturbance-induced speed violation.
    """
    if horizon < 1:
        raise ParameterError("horizon must be at least 1")
    n = config.state_dim
    w = _check_disturbance(disturbance, horizon, n)
    rng = np.random.default_rng(seed)
    area = np.array([config.area_x, config.area_y])
    uav = rng.uniform(size=2) * area
    gu_pos = rng.uniform(size=(config.gu_count, 2)) * area
    gu_speed = np.full(config.gu_count, config.gu_mean_speed)
    gu_heading = rng.uniform(0.0, 2.0 * math.pi, size=config.gu_count)

    policy = ScriptedPolicy(policy_kind, config)
    states = np.empty((horizon + 1, n))
    actions = np.empty((horizon, 2))
    rewards = np.empty(horizon)
    states[0] = np.concatenate([gu_pos.ravel(), uav])
    max_step = config.step_seconds * config.uav_max_speed

    for k in range(horizon):
        waypoint = policy.waypoint_arrays(uav, gu_pos)
        actions[k] = waypoint
        # The speed constraint is a property of the commanded step; state
        # disturbances displace the craft but are not policy violations.
        violation = int(np.linalg.norm(waypoint - uav) > max_step + _SPEED_EPS)
        gu_pos, gu_speed, gu_heading = _step_gu_arrays(
            gu_pos, gu_speed, gu_heading, config, rng
        )
        uav = waypoint.copy()
        if w is not None:
            flat = np.concatenate([gu_pos.ravel(), uav]) + w[k]
            coords = flat.reshape(-1, 2)
            coords[:, 0] = np.clip(coords[:, 0], 0.0, config.area_x)
            coords[:, 1] = np.clip(coords[:, 1], 0.0, config.area_y)
            gu_pos = coords[:-1].copy()
            uav = coords[-1].copy()
        s = _serve_mask(uav, gu_pos, config)
        fairness = fairness_index(s.astype(int), config.fairness_mode)
        rewards[k] = uav_reward(s.astype(int), fairness, violation, config)
        states[k + 1] = np.concatenate([gu_pos.ravel(), uav])

    return Trajectory(run_id=0, states=states, actions=actions, rewards=rewards, seed=seed)


def uav_ensemble(
    config: UavEnvConfig,
    policy_kind: str,
    horizon: int,
    runs: int,
    master_seed: int,
    disturbance: np.ndarray | None = None,
) -> TrajectoryEnsemble:
    """Independent episodes with per-run seed master_seed + run index; the
    disturbance sequence, when given, is shared by every run."""
    if runs < 1:
        raise ParameterError("runs must be at least 1")
    trajectories = []
    for r in range(runs):
        t = uav_rollout(config, policy_kind, horizon, master_seed + r, disturbance)
        trajectories.append(replace(t, run_id=r))
    return TrajectoryEnsemble(trajectories=tuple(trajectories))
