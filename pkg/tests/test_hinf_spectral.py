"""Frequency response and worst-case gain: analytic oracles and search."""

import math

import numpy as np
import pytest

from koopbound import (
    DataError,
    HinfReport,
    ParameterError,
    PoleProximityError,
    TransferFunction,
    frequency_response,
    hinf_norm,
    spectral_radius,
)


def random_orthogonal(rng, n):
    q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    return q


class TestSpectralRadius:
    def test_zero_matrix(self):
        assert spectral_radius(np.zeros((3, 3))) == 0.0

    def test_diagonal(self):
        assert np.isclose(spectral_radius(np.diag([0.5, -0.8])), 0.8)

    def test_companion_double_root(self):
        # Characteristic polynomial l^2 - l + 1/4 has a double root at 0.5.
        k = np.array([[0.0, 1.0], [-0.25, 1.0]])
        assert np.isclose(spectral_radius(k), 0.5, atol=1e-8)

    def test_non_finite_rejected(self):
        with pytest.raises(DataError):
            spectral_radius(np.array([[np.nan]]))


class TestFrequencyResponse:
    def test_scalar_resolvent_dc(self):
        tf = TransferFunction.resolvent(np.array([[0.9]]))
        _, sigma = frequency_response(tf, 0.0)
        assert np.isclose(sigma, 10.0, atol=1e-12)

    def test_scalar_resolvent_nyquist(self):
        tf = TransferFunction.resolvent(np.array([[0.9]]))
        _, sigma = frequency_response(tf, math.pi)
        assert np.isclose(sigma, 1.0 / 1.9, atol=1e-12)

    def test_constant_matrix(self):
        tf = TransferFunction.constant(np.diag([3.0, 4.0]))
        for omega in (0.0, 1.0, math.pi):
            _, sigma = frequency_response(tf, omega)
            assert sigma == 4.0

    def test_pole_proximity_error(self):
        tf = TransferFunction.resolvent(np.array([[1.0]]))
        with pytest.raises(PoleProximityError) as excinfo:
            tf.evaluate(0.0)
        assert excinfo.value.eigenvalue is not None

    def test_symmetry_about_zero(self):
        rng = np.random.default_rng(0)
        k = rng.normal(size=(4, 4)) * 0.2
        tf = TransferFunction.resolvent(k)
        for omega in rng.uniform(0.1, math.pi - 0.1, size=5):
            _, s_pos = frequency_response(tf, omega)
            _, s_neg = frequency_response(tf, -omega)
            assert np.isclose(s_pos, s_neg, rtol=1e-12)


class TestHinfNorm:
    def test_constant_kind(self):
        report = hinf_norm(TransferFunction.constant(np.diag([3.0, 4.0])))
        assert report.value == 4.0
        assert report.omega_star == 0.0
        assert report.converged

    def test_scalar_positive_pole(self):
        report = hinf_norm(TransferFunction.resolvent(np.array([[0.9]])))
        assert abs(report.value - 10.0) <= 1e-6
        assert report.omega_star <= 1e-3
        assert report.converged and not report.ill_conditioned

    def test_diag_negative_dominant(self):
        report = hinf_norm(TransferFunction.resolvent(np.diag([0.5, -0.8])))
        assert abs(report.value - 5.0) <= 1e-6
        assert abs(report.omega_star - math.pi) <= 1e-3

    def test_unit_circle_pole_flagged_infinite(self):
        report = hinf_norm(TransferFunction.resolvent(np.array([[1.0]])))
        assert math.isinf(report.value)
        assert not report.converged

    def test_near_unit_circle_flagged_ill_conditioned(self):
        report = hinf_norm(TransferFunction.resolvent(np.array([[1.0 - 1e-7]])))
        assert report.converged and report.ill_conditioned
        assert np.isclose(report.value, 1e7, rtol=1e-4)

    def test_scalar_oracle_random(self):
        # For scalar K = [a], the supremum is 1/(1 - |a|).
        rng = np.random.default_rng(1)
        for _ in range(20):
            a = rng.uniform(-0.95, 0.95)
            if abs(a) < 1e-3:
                continue
            report = hinf_norm(TransferFunction.resolvent(np.array([[a]])))
            assert abs(report.value - 1.0 / (1.0 - abs(a))) <= 1e-6

    def test_normal_matrix_oracle(self):
        # Orthogonally diagonalizable K: the gain is max_i 1/(1 - |a_i|).
        rng = np.random.default_rng(2)
        for _ in range(10):
            n = int(rng.integers(2, 6))
            eigs = rng.uniform(-0.9, 0.9, size=n)
            q = random_orthogonal(rng, n)
            k = q @ np.diag(eigs) @ q.T
            report = hinf_norm(TransferFunction.resolvent(k))
            expected = 1.0 / (1.0 - np.max(np.abs(eigs)))
            assert abs(report.value - expected) <= 1e-6 * expected

    def test_lower_bound_soundness(self):
        rng = np.random.default_rng(3)
        k = rng.normal(size=(5, 5))
        k *= 0.85 / spectral_radius(k)
        tf = TransferFunction.resolvent(k)
        report = hinf_norm(tf)
        for omega in np.linspace(0.0, math.pi, 113):
            _, sigma = frequency_response(tf, omega)
            assert report.value >= sigma - report.refinement_tol

    def test_grid_monotonicity(self):
        rng = np.random.default_rng(4)
        for _ in range(5):
            k = rng.normal(size=(4, 4))
            k *= 0.9 / spectral_radius(k)
            tf = TransferFunction.resolvent(k)
            coarse = hinf_norm(tf, grid_points=1024)
            fine = hinf_norm(tf, grid_points=2048)
            assert fine.value >= coarse.value - coarse.refinement_tol

    def test_parameter_validation(self):
        tf = TransferFunction.resolvent(np.array([[0.5]]))
        with pytest.raises(ParameterError):
            hinf_norm(tf, grid_points=8)
        with pytest.raises(ParameterError):
            hinf_norm(tf, refinement_tol=0.0)

    def test_resolvent_requires_square(self):
        with pytest.raises(ParameterError):
            TransferFunction.resolvent(np.ones((2, 3)))


class TestReportSerialization:
    def test_round_trip_finite(self):
        report = hinf_norm(TransferFunction.resolvent(np.array([[0.9]])))
        doc = report.to_dict()
        back = HinfReport.from_dict(doc)
        assert back == report

    def test_infinite_sentinel(self):
        report = hinf_norm(TransferFunction.resolvent(np.array([[1.0]])))
        doc = report.to_dict()
        assert doc["value"] == "inf"
        assert doc["converged"] is False
        back = HinfReport.from_dict(doc)
        assert math.isinf(back.value)
