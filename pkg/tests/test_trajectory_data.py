"""Trajectory format, validation, ensemble means, and snapshot assembly."""

import numpy as np
import pytest

from koopbound import (
    DataError,
    DimensionMismatchError,
    InsufficientDataError,
    MeanTrajectory,
    ParseError,
    SnapshotPair,
    Trajectory,
    TrajectoryEnsemble,
    build_action_pairs,
    build_state_snapshots,
    concat_ensembles,
    ensemble_mean,
    load_trajectories,
    save_trajectories,
)


def make_traj(run_id, states, actions, rewards=None, seed=-1):
    states = np.atleast_2d(np.asarray(states, dtype=float).T).T
    if states.ndim == 1:
        states = states[:, None]
    actions = np.asarray(actions, dtype=float)
    if actions.ndim == 1:
        actions = actions[:, None]
    if rewards is None:
        rewards = np.zeros(len(actions))
    return Trajectory(run_id=run_id, states=states, actions=actions,
                      rewards=np.asarray(rewards, dtype=float), seed=seed)


def scalar_traj(run_id, state_values, action_values=None, seed=-1):
    states = np.asarray(state_values, dtype=float)[:, None]
    k = len(states) - 1
    if action_values is None:
        action_values = np.zeros(k)
    actions = np.asarray(action_values, dtype=float)[:, None]
    return Trajectory(run_id=run_id, states=states, actions=actions,
                      rewards=np.zeros(k), seed=seed)


class TestTrajectoryValidation:
    def test_length_relation_enforced(self):
        with pytest.raises(DimensionMismatchError):
            Trajectory(run_id=0, states=np.zeros((3, 2)),
                       actions=np.zeros((3, 1)), rewards=np.zeros(3))

    def test_non_finite_rejected(self):
        states = np.zeros((3, 2))
        states[1, 0] = np.nan
        with pytest.raises(DataError):
            Trajectory(run_id=0, states=states,
                       actions=np.zeros((2, 1)), rewards=np.zeros(2))

    def test_ragged_ensemble_rejected(self):
        t1 = scalar_traj(0, [1.0, 2.0, 3.0])
        t2 = scalar_traj(1, [1.0, 2.0])
        with pytest.raises(DimensionMismatchError):
            TrajectoryEnsemble(trajectories=(t1, t2))

    def test_duplicate_run_ids_rejected(self):
        t1 = scalar_traj(0, [1.0, 2.0])
        t2 = scalar_traj(0, [3.0, 4.0])
        with pytest.raises(DataError):
            TrajectoryEnsemble(trajectories=(t1, t2))

    def test_arrays_are_read_only(self):
        t = scalar_traj(0, [1.0, 2.0])
        with pytest.raises(ValueError):
            t.states[0, 0] = 5.0


class TestFileFormat:
    def test_round_trip_single_run(self, tmp_path):
        states = np.array([[1.0, 2.0], [0.1, -0.2], [np.pi, 1e-17]])
        actions = np.array([[0.5], [-1.5]])
        rewards = np.array([0.25, -0.75])
        ens = TrajectoryEnsemble((Trajectory(0, states, actions, rewards, seed=7),))
        path = tmp_path / "traj.csv"
        save_trajectories(ens, path)
        loaded = load_trajectories(path)
        assert loaded.r_count == 1 and loaded.horizon == 2
        t = loaded.trajectories[0]
        assert np.array_equal(t.states, states)
        assert np.array_equal(t.actions, actions)
        assert np.array_equal(t.rewards, rewards)
        assert t.seed == 7
        # Re-saving reproduces the file byte for byte.
        path2 = tmp_path / "traj2.csv"
        save_trajectories(loaded, path2)
        assert path.read_bytes() == path2.read_bytes()

    def test_row_with_wrong_column_count(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text(
            "run,k,x0,x1,u0,r\n"
            "0,0,1.0,2.0,0.5,1.0\n"
            "0,1,1.0,2.0,3.0,0.5,1.0\n"
        )
        with pytest.raises(DimensionMismatchError, match="line 3"):
            load_trajectories(path)

    def test_nan_in_state_column(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text(
            "run,k,x0,u0,r\n"
            "0,0,NaN,0.5,1.0\n"
            "0,1,2.0,,\n"
        )
        with pytest.raises(DataError, match="line 2"):
            load_trajectories(path)

    def test_unparseable_value_names_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text(
            "run,k,x0,u0,r\n"
            "0,0,oops,0.5,1.0\n"
            "0,1,2.0,,\n"
        )
        with pytest.raises(ParseError, match="line 2"):
            load_trajectories(path)

    def test_expected_dims_checked(self, tmp_path):
        ens = TrajectoryEnsemble((scalar_traj(0, [1.0, 2.0, 3.0]),))
        path = tmp_path / "traj.csv"
        save_trajectories(ens, path)
        assert load_trajectories(path, expected_dims=(1, 1)).n == 1
        with pytest.raises(DimensionMismatchError):
            load_trajectories(path, expected_dims=(2, 1))

    def test_missing_terminal_row(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text(
            "run,k,x0,u0,r\n"
            "0,0,1.0,0.5,1.0\n"
            "0,1,2.0,0.5,1.0\n"
        )
        with pytest.raises(ParseError):
            load_trajectories(path)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        with pytest.raises(ParseError):
            load_trajectories(path)


class TestEnsembleMean:
    def test_single_run_identity(self):
        t = make_traj(0, np.array([[1.0, 2.0], [3.0, 4.0]]), [[0.5]], [1.0])
        mean = ensemble_mean(TrajectoryEnsemble((t,)))
        assert np.array_equal(mean.mean_states, t.states)
        assert np.array_equal(mean.mean_actions, t.actions)
        assert mean.r_count == 1

    def test_symmetric_runs_cancel(self):
        v = np.array([[1.0, -2.0], [3.0, 4.0], [0.5, 0.25]])
        t1 = Trajectory(0, v, np.ones((2, 1)), np.zeros(2))
        t2 = Trajectory(1, -v, np.ones((2, 1)), np.zeros(2))
        mean = ensemble_mean(TrajectoryEnsemble((t1, t2)))
        assert np.allclose(mean.mean_states, 0.0)

    def test_hand_arithmetic(self):
        # Runs (1,2,3) and (3,4,5) average to (2,3,4).
        t1 = scalar_traj(0, [1.0, 2.0, 3.0])
        t2 = scalar_traj(1, [3.0, 4.0, 5.0])
        mean = ensemble_mean(TrajectoryEnsemble((t1, t2)))
        assert np.array_equal(mean.mean_states.ravel(), [2.0, 3.0, 4.0])

    def test_mean_is_linear_under_duplication(self):
        rng = np.random.default_rng(3)
        trajs = tuple(
            Trajectory(r, rng.normal(size=(4, 2)), rng.normal(size=(3, 1)),
                       rng.normal(size=3))
            for r in range(3)
        )
        ens = TrajectoryEnsemble(trajs)
        doubled = concat_ensembles([ens, ens])
        m1 = ensemble_mean(ens)
        m2 = ensemble_mean(doubled)
        assert np.allclose(m1.mean_states, m2.mean_states, atol=1e-14)
        assert np.allclose(m1.mean_actions, m2.mean_actions, atol=1e-14)


class TestSnapshots:
    def test_state_shift_definition(self):
        mean = MeanTrajectory(np.array([[1.0], [2.0], [4.0]]),
                              np.zeros((2, 1)), r_count=1)
        pair = build_state_snapshots(mean)
        assert np.array_equal(pair.left, [[1.0, 2.0]])
        assert np.array_equal(pair.right, [[2.0, 4.0]])
        assert pair.kind == "state_shifted"

    def test_insufficient_horizon(self):
        mean = MeanTrajectory(np.array([[1.0], [2.0]]), np.zeros((1, 1)), r_count=1)
        with pytest.raises(InsufficientDataError):
            build_state_snapshots(mean)

    def test_shapes_n2_k3(self):
        mean = MeanTrajectory(np.arange(8.0).reshape(4, 2), np.zeros((3, 1)), 1)
        pair = build_state_snapshots(mean)
        assert pair.left.shape == (2, 3) and pair.right.shape == (2, 3)

    def test_shift_consistency(self):
        rng = np.random.default_rng(11)
        mean = MeanTrajectory(rng.normal(size=(6, 3)), rng.normal(size=(5, 2)), 1)
        pair = build_state_snapshots(mean)
        for j in range(pair.columns - 1):
            assert np.array_equal(pair.left[:, j + 1], pair.right[:, j])

    def test_action_pair_shapes(self):
        mean = MeanTrajectory(np.zeros((2, 2)), np.zeros((1, 1)), 1)
        pair = build_action_pairs(mean)
        assert pair.left.shape == (2, 1) and pair.right.shape == (1, 1)
        assert pair.kind == "state_action"

    def test_action_pair_values(self):
        mean = MeanTrajectory(np.array([[1.0], [2.0], [3.0]]),
                              np.array([[2.0], [4.0]]), 1)
        pair = build_action_pairs(mean)
        assert np.array_equal(pair.left, [[1.0, 2.0]])
        assert np.array_equal(pair.right, [[2.0, 4.0]])

    def test_zero_actions(self):
        mean = MeanTrajectory(np.ones((3, 2)), np.zeros((2, 2)), 1)
        assert not np.any(build_action_pairs(mean).right)

    def test_snapshot_pair_validation(self):
        with pytest.raises(DimensionMismatchError):
            SnapshotPair(left=np.zeros((2, 3)), right=np.zeros((2, 4)),
                         kind="state_shifted")
        with pytest.raises(DimensionMismatchError):
            SnapshotPair(left=np.zeros((2, 3)), right=np.zeros((3, 3)),
                         kind="state_shifted")
