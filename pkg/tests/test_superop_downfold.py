from __future__ import annotations

import numpy as np
import pytest

from varprop.errors import DimensionMismatchError, NonOrthonormalBasisError
from varprop.graphene import (
    GrapheneParams,
    PmConvention,
    graphene_hamiltonians,
    low_energy_basis,
    sinc_coefficients,
    closed_generator,
    closed_second_order,
    closed_variational,
)
from varprop.spectral_core import HermitianOperator
from varprop.superop_downfold import (
    PerturbationSplit,
    check_orthonormal,
    commutator,
    downfold_coefficients,
    effective_hamiltonian,
    nested_commutator,
    projector_from_indices,
    solve_generator,
    standard_second_order,
    super_moments,
    superoperator,
)


def _degenerate_split(rng, dim=6):
    h0 = HermitianOperator(np.diag([0.0, 0.0, 1.0, 1.0, 2.5, 2.5][:dim]))
    m = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return PerturbationSplit(h0, HermitianOperator(0.05 * (m + m.conj().T)))


class TestSuperMoments:
    @pytest.mark.parametrize("dim", [2, 3, 5, 8])
    def test_match_explicit_kronecker_traces(self, random_hermitian, dim):
        o = random_hermitian(dim)
        table = super_moments(o, 6)
        explicit = superoperator(o)
        power = np.eye(dim**2)
        scale = float(np.max(np.abs(o.spectrum.eigenvalues))) * 2
        for n in range(7):
            expected = np.trace(power).real / dim**2
            assert table.h[n] == pytest.approx(expected, rel=1e-10, abs=1e-10 * scale**n)
            power = power @ explicit

    def test_odd_moments_vanish(self, random_hermitian):
        table = super_moments(random_hermitian(6), 6)
        for n in (1, 3, 5):
            assert abs(table.h[n]) < 1e-10 * (1 + abs(table.h[n + 1]))

    def test_explicit_superoperator_is_guarded(self, random_hermitian):
        with pytest.raises(ValueError):
            superoperator(random_hermitian(9))
        assert superoperator(random_hermitian(9), force=True).shape == (81, 81)


class TestGenerator:
    def test_removes_coupling_between_levels(self, rng):
        split = _degenerate_split(rng)
        gen = solve_generator(split)
        assert gen.first_order_residual <= 1e-9 * np.linalg.norm(split.v.entries)
        assert gen.block_diagonal_remainder > 0.0
        np.testing.assert_allclose(gen.o.entries, gen.o.entries.conj().T, atol=1e-14)

    def test_closed_graphene_generator(self, rng):
        for _ in range(10):
            p1, p2 = rng.uniform(-1.0, 1.0, size=2)
            params = GrapheneParams(gamma=1.3, p1=p1, p2=p2)
            gen = solve_generator(graphene_hamiltonians(params))
            np.testing.assert_allclose(gen.o.entries, closed_generator(params), atol=1e-10)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            PerturbationSplit(HermitianOperator(np.eye(2)), HermitianOperator(np.eye(3)))


class TestEffectiveHamiltonian:
    def test_graphene_coefficients_are_sinc(self, rng):
        for x in np.linspace(0.04, 2.0, 50):
            angle = rng.uniform(0, 2 * np.pi)
            params = GrapheneParams(1.0, x * np.cos(angle), x * np.sin(angle))
            gen = solve_generator(graphene_hamiltonians(params))
            c0, c1, c2 = downfold_coefficients(super_moments(gen.o, 5))
            closed_c1, closed_c2 = sinc_coefficients(params)
            assert c1 == pytest.approx(closed_c1, abs=1e-8)
            assert c2 == pytest.approx(closed_c2, abs=1e-8)

    def test_graphene_matches_closed_matrices(self, rng):
        for _ in range(50):
            p = rng.uniform(1e-3, 2.0)
            angle = rng.uniform(0, 2 * np.pi)
            params = GrapheneParams(
                1.0, p * np.cos(angle), p * np.sin(angle), PmConvention.COMPLEX
            )
            split = graphene_hamiltonians(params)
            gen = solve_generator(split)
            c = downfold_coefficients(super_moments(gen.o, 5))
            result = effective_hamiltonian(split, gen, c, low_energy_basis())
            np.testing.assert_allclose(
                result.h_effective.entries, closed_variational(params), atol=1e-9
            )
            np.testing.assert_allclose(
                standard_second_order(split, gen, low_energy_basis()).entries,
                closed_second_order(params),
                atol=1e-12,
            )

    def test_small_perturbation_reduces_to_second_order(self, rng):
        split = _degenerate_split(rng)
        tiny = PerturbationSplit(split.h0, split.v.scaled(1e-4))
        gen = solve_generator(tiny)
        c = downfold_coefficients(super_moments(gen.o, 5))
        assert c[0] == pytest.approx(1.0, rel=1e-6)
        assert c[1] == pytest.approx(-1j, rel=1e-6)
        assert c[2] == pytest.approx(-0.5, rel=1e-6)
        basis = projector_from_indices(6, [0, 1])
        improved = effective_hamiltonian(tiny, gen, c, basis).h_effective.entries
        standard = standard_second_order(tiny, gen, basis).entries
        v_block = basis.conj().T @ tiny.v.entries @ basis
        np.testing.assert_array_equal(basis.conj().T @ tiny.h0.entries @ basis, 0.0)

        # The standard result carries no PVP term; c0 multiplies it in the improved one.
        second = improved - c[0] * v_block
        np.testing.assert_allclose(second, standard, atol=1e-3 * np.max(np.abs(standard)))
        np.testing.assert_allclose(
            improved, standard + v_block, rtol=1e-6, atol=1e-6 * np.max(np.abs(v_block))
        )

    def test_rejects_non_orthonormal_basis(self):
        with pytest.raises(NonOrthonormalBasisError):
            check_orthonormal(np.array([[1.0, 1.0], [0.0, 1.0]]))

    def test_basis_dimension_mismatch(self, rng):
        split = _degenerate_split(rng)
        gen = solve_generator(split)
        with pytest.raises(DimensionMismatchError):
            effective_hamiltonian(split, gen, (1, -1j, -0.5), projector_from_indices(4, [0]))


def test_nested_commutator():
    a = np.array([[0, 1], [0, 0]], dtype=complex)
    b = np.array([[1, 0], [0, -1]], dtype=complex)
    np.testing.assert_allclose(nested_commutator(b, a, 1), commutator(b, a))
    np.testing.assert_allclose(nested_commutator(b, a, 2), 4 * a)
    np.testing.assert_allclose(nested_commutator(b, a, 0), a)
