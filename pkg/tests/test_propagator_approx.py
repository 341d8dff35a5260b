from __future__ import annotations

import numpy as np
import pytest
import scipy.special

from varprop.errors import (
    DegenerateMomentsError,
    InsufficientMomentsError,
    IntegrationError,
)
from varprop.propagator_approx import (
    OdeSolverConfig,
    closed_form_cubic_quartic,
    closed_form_propagator,
    closed_form_trajectory,
    kpm_polynomial,
    kpm_propagator,
    resolve_kpm_convention,
    residual_action_coefficients,
    residual_action_propagator,
    taylor_polynomial,
    taylor_propagator,
    variational_coefficients,
    variational_propagator,
)
from varprop.spectral_core import (
    HermitianOperator,
    Method,
    MomentTable,
    exact_propagator,
    l2_distance,
    l2_distance_spectral,
    moments,
    gue_hamiltonian,
    operator_norm,
    sample_rngs,
)

SIGMA1 = np.array([[0, 1], [1, 0]], dtype=complex)


def _spectral_error(h, trajectory):
    lam = h.spectrum.eigenvalues
    exact = np.exp(-1j * np.outer(trajectory.times, lam))
    return l2_distance_spectral(trajectory.polynomial().evaluate(lam), exact)


def test_taylor_coefficients():
    poly = taylor_polynomial([0.0, 0.5], order=2)
    np.testing.assert_allclose(poly.coeffs[1], [1.0, -0.5j, -0.125])
    assert poly.method == Method.TAYLOR


def test_polynomial_evaluate_matches_assemble(random_hermitian):
    h = random_hermitian(4)
    poly = taylor_polynomial([0.0, 0.3, 0.9], order=3)
    lam = h.spectrum.eigenvalues
    v = h.spectrum.eigenvectors
    for matrix, values in zip(poly.assemble(h), poly.evaluate(lam)):
        np.testing.assert_allclose(matrix.entries, (v * values) @ v.conj().T, atol=1e-12)


def test_taylor_propagator_small_time(random_hermitian):
    h = random_hermitian(3)
    t = 1e-3 / operator_norm(h)
    assert l2_distance(taylor_propagator(h, t), exact_propagator(h, t)) < 1e-9


class TestKernelPolynomial:
    def test_constant_term_follows_jacobi_anger(self):
        assert resolve_kpm_convention() == 1

    def test_identity_at_time_zero(self, random_hermitian):
        h = random_hermitian(4)
        np.testing.assert_allclose(kpm_propagator(h, 0.0).entries, np.eye(4), atol=1e-14)

    def test_close_to_exact_at_short_times(self, random_hermitian):
        h = random_hermitian(4)
        t = 0.05 / operator_norm(h)
        assert l2_distance(kpm_propagator(h, t), exact_propagator(h, t)) < 1e-4

    def test_scalar_reduction(self):
        t = 0.5
        u = kpm_propagator(HermitianOperator(np.array([[1.0]])), t)
        j0, j1, j2 = scipy.special.jv([0, 1, 2], t)
        expected = j0 + resolve_kpm_convention() * 2 * j2 - 2j * j1 - 4 * j2
        assert u.entries[0, 0] == pytest.approx(expected, rel=1e-14)
        assert abs(u.entries[0, 0] - np.exp(-1j * t)) < 1e-2


class TestVariational:
    @pytest.mark.parametrize("dim", [2, 3])
    def test_exact_when_dimension_fits_the_ansatz(self, dim):
        t_norm = np.linspace(0.0, 2.0, 41)
        for rng in sample_rngs(seed=11, samples=100):
            h = gue_hamiltonian(dim, rng)
            trajectory = variational_coefficients(
                moments(h, 6), 2, t_norm / operator_norm(h)
            )
            assert np.max(_spectral_error(h, trajectory)) <= 1e-7

    def test_sigma1_is_represented_exactly(self):
        h = HermitianOperator(SIGMA1)
        for u in variational_propagator(h, np.linspace(0.0, 2.0, 21)):
            assert l2_distance(u, exact_propagator(h, u.time)) <= 1e-8

    def test_zero_hamiltonian_stays_at_identity(self):
        for u in variational_propagator(HermitianOperator(np.zeros((3, 3))), [0.0, 0.5, 2.0]):
            np.testing.assert_allclose(u.entries, np.eye(3), atol=1e-14)

    def test_coefficients_are_real_for_a_symmetric_spectrum(self):
        # c0, i c1 and c2 stay real only while the odd moments vanish.
        m = MomentTable.from_eigenvalues(np.array([-2.0, -0.5, 0.5, 2.0]), 6)
        c0, c1, c2 = variational_coefficients(m, 2, np.linspace(0.0, 2.0, 11)).coeffs.T
        for values in (c0, 1j * c1, c2):
            assert np.max(np.abs(values.imag)) <= 1e-9

    def test_starts_at_identity(self, random_hermitian):
        h = random_hermitian(5)
        trajectory = variational_coefficients(moments(h, 6), 2, [0.0, 0.1])
        np.testing.assert_array_equal(trajectory.coeffs[0], [1.0, 0.0, 0.0])

    def test_propagator_matrices(self, random_hermitian):
        h = random_hermitian(3)
        t_grid = np.linspace(0.0, 1.0, 5) / operator_norm(h)
        for u in variational_propagator(h, t_grid):
            assert u.method == Method.VARIATIONAL
            assert l2_distance(u, exact_propagator(h, u.time)) < 1e-7

    def test_insufficient_moments(self, random_hermitian):
        with pytest.raises(InsufficientMomentsError):
            variational_coefficients(moments(random_hermitian(3), 4), 2, [0.0, 1.0])

    def test_grid_must_start_at_zero(self, random_hermitian):
        with pytest.raises(ValueError):
            variational_coefficients(moments(random_hermitian(3), 6), 2, [0.1, 1.0])

    def test_step_budget(self, random_hermitian):
        cfg = OdeSolverConfig(rel_tol=1e-12, abs_tol=1e-14, max_steps=1)
        with pytest.raises(IntegrationError):
            variational_coefficients(moments(random_hermitian(5), 6), 2, [0.0, 50.0], cfg)

    def test_expm_shortcut_agrees_with_integration(self, random_hermitian):
        h = random_hermitian(5)
        t_grid = np.linspace(0.0, 1.5, 7) / operator_norm(h)
        integrated = variational_coefficients(moments(h, 6), 2, t_grid)
        shortcut = variational_coefficients(
            moments(h, 6), 2, t_grid, OdeSolverConfig(expm_shortcut=True)
        )
        np.testing.assert_allclose(shortcut.coeffs, integrated.coeffs, atol=1e-8)


class TestClosedForm:
    def test_sigma1_coefficients(self):
        m = MomentTable.from_eigenvalues(np.linalg.eigvalsh(SIGMA1), 4)
        c13, c14, c23, c24 = closed_form_cubic_quartic(m)
        assert c13 == pytest.approx(1j / 6)
        assert c14 == pytest.approx(0.0)
        assert c23 == pytest.approx(0.0)
        assert c24 == pytest.approx(1 / 24)

    def test_sigma1_propagator_matches_cos_sin_series(self):
        h = HermitianOperator(SIGMA1)
        for u in closed_form_propagator(h, [0.0, 0.05, 0.1]):
            assert u.method == Method.VARIATIONAL_CLOSED_FORM
            assert l2_distance(u, exact_propagator(h, u.time)) < 1e-6

    def test_degenerate_moments(self):
        m = MomentTable.from_eigenvalues(np.array([0.5, 0.5]), 4)
        with pytest.raises(DegenerateMomentsError):
            closed_form_cubic_quartic(m)

    def test_close_to_ode_at_short_times(self):
        t_norm = np.linspace(0.0, 0.5, 11)
        for rng in sample_rngs(seed=3, samples=10):
            h = gue_hamiltonian(5, rng)
            times = t_norm / operator_norm(h)
            m = moments(h, 6)
            lam = h.spectrum.eigenvalues
            closed = closed_form_trajectory(m, times).polynomial().evaluate(lam)
            ode = variational_coefficients(m, 2, times).polynomial().evaluate(lam)
            assert np.max(l2_distance_spectral(closed, ode)) <= 1e-2

    def test_mean_distance_to_ode_up_to_one_and_a_half(self):
        # c0 is pinned to 1, so the mean distance passes 0.05 near t*|H| = 1.7.
        t_norm = np.linspace(0.0, 1.5, 16)
        distances = []
        for rng in sample_rngs(seed=42, samples=100):
            h = gue_hamiltonian(5, rng)
            times = t_norm / operator_norm(h)
            m = moments(h, 6)
            lam = h.spectrum.eigenvalues
            closed = closed_form_trajectory(m, times).polynomial().evaluate(lam)
            ode = variational_coefficients(m, 2, times).polynomial().evaluate(lam)
            distances.append(l2_distance_spectral(closed, ode))
        assert np.max(np.mean(distances, axis=0)) <= 0.05


class TestResidualAction:
    def test_recovers_exact_evolution_in_two_dimensions(self, random_hermitian):
        h = random_hermitian(2)
        times = np.linspace(0.0, 2.0, 21) / operator_norm(h)
        trajectory = residual_action_coefficients(moments(h, 6), 2, times)
        assert trajectory.method == Method.RESIDUAL_ACTION
        assert trajectory.objective >= 0.0
        np.testing.assert_allclose(trajectory.coeffs[0], [1.0, 0.0, 0.0], atol=1e-14)
        assert np.max(_spectral_error(h, trajectory)) <= 1e-5

    def test_propagator_matrices(self, random_hermitian):
        h = random_hermitian(2)
        t_grid = np.linspace(0.0, 1.0, 5) / operator_norm(h)
        for u in residual_action_propagator(h, t_grid):
            assert u.method == Method.RESIDUAL_ACTION
            assert l2_distance(u, exact_propagator(h, u.time)) < 1e-5

    def test_sigma1_residual_vanishes(self):
        h = HermitianOperator(SIGMA1)
        trajectory = residual_action_coefficients(moments(h, 6), 2, np.linspace(0.0, 2.0, 21))
        assert trajectory.objective <= 1e-8
        for u in trajectory.polynomial().assemble(h):
            assert l2_distance(u, exact_propagator(h, u.time)) <= 1e-6

    def test_insufficient_moments(self, random_hermitian):
        with pytest.raises(InsufficientMomentsError):
            residual_action_coefficients(moments(random_hermitian(3), 5), 2, [0.0, 1.0])

    def test_single_point_grid(self):
        m = MomentTable.from_eigenvalues(np.array([-1.0, 1.0]), 6)
        trajectory = residual_action_coefficients(m, 2, [0.0])
        assert trajectory.objective == 0.0


@pytest.mark.parametrize("method", [Method.TAYLOR, Method.KPM, Method.VARIATIONAL])
def test_short_time_error_is_third_order(random_hermitian, method):
    h = random_hermitian(5)
    norm = operator_norm(h)
    times = np.array([0.0, 1e-3, 1e-2]) / norm
    lam = h.spectrum.eigenvalues
    if method == Method.TAYLOR:
        poly = taylor_polynomial(times, 2)
    elif method == Method.KPM:
        poly = kpm_polynomial(times, norm)
    else:
        poly = variational_coefficients(moments(h, 6), 2, times).polynomial()
    errors = l2_distance_spectral(poly.evaluate(lam), np.exp(-1j * np.outer(times, lam)))
    ratio = errors[1:] / times[1:] ** 2
    assert ratio[1] / ratio[0] >= 8.0


def test_hermitian_operator_from_pauli():
    assert operator_norm(HermitianOperator(SIGMA1)) == pytest.approx(1.0)
