from __future__ import annotations

import math

import numpy as np
import pytest

from varprop.graphene import (
    GrapheneParams,
    LadderConvention,
    PmConvention,
    graphene_hamiltonians,
    graphene_sweep,
    sinc_coefficients,
    closed_generator,
    closed_second_order,
    closed_super_trace,
    closed_variational,
    convention_verdict,
)
from varprop.spectral_core import HermitianOperator
from varprop.superop_downfold import solve_generator, super_moments, superoperator
from varprop.sweeps import CoefficientSource


def _exact_mid_level(x, gamma=1.0):
    return gamma * (math.sqrt(1 + 4 * x**2) - 1) / 2


class TestHamiltonians:
    @pytest.mark.parametrize("ladder", list(LadderConvention))
    def test_low_energy_states_are_annihilated(self, ladder):
        h0 = graphene_hamiltonians(GrapheneParams(1.7, 0.3, -0.2, ladder=ladder)).h0.entries
        for k in (1, 2):
            np.testing.assert_allclose(h0 @ np.eye(4)[:, k], 0.0)

    def test_literal_ladder_scales_h0_by_four(self):
        half = graphene_hamiltonians(GrapheneParams(1.0)).h0.entries
        literal = graphene_hamiltonians(
            GrapheneParams(1.0, ladder=LadderConvention.LITERAL)
        ).h0.entries
        np.testing.assert_allclose(literal, 4 * half)

    def test_no_momentum_no_perturbation(self):
        np.testing.assert_array_equal(graphene_hamiltonians(GrapheneParams(2.0)).v.entries, 0)

    def test_spectrum_is_symmetric(self, rng):
        for _ in range(5):
            p1, p2 = rng.uniform(-2, 2, size=2)
            energies = graphene_hamiltonians(GrapheneParams(1.0, p1, p2)).full.spectrum.eigenvalues
            np.testing.assert_allclose(energies, -energies[::-1], atol=1e-12)

    def test_mid_levels_closed_form(self):
        x = 0.4
        energies = graphene_hamiltonians(GrapheneParams(1.0, 0.0, x)).full.spectrum.eigenvalues
        assert sorted(np.abs(energies))[0] == pytest.approx(_exact_mid_level(x), rel=1e-12)

    def test_gamma_must_be_positive(self):
        with pytest.raises(ValueError):
            GrapheneParams(gamma=0.0)


class TestClosedFormulas:
    def test_coefficient_limits(self):
        c1, c2 = sinc_coefficients(GrapheneParams(1.0, 0.0, 1e-4))
        assert c1 == pytest.approx(-1j, rel=1e-6)
        assert c2 == pytest.approx(-0.5, rel=1e-6)

    def test_variational_equals_second_order_at_small_momentum(self):
        params = GrapheneParams(1.0, 0.0, 1e-4)
        np.testing.assert_allclose(
            closed_variational(params), closed_second_order(params), rtol=1e-6
        )

    def test_conventions_agree_on_the_p2_axis_spectrum(self):
        spectra = []
        for convention in PmConvention:
            matrix = closed_second_order(GrapheneParams(1.0, 0.0, 0.7, convention))
            spectra.append(np.sort(np.linalg.eigvals(matrix).real))
        np.testing.assert_allclose(spectra[0], spectra[1], atol=1e-12)

    @pytest.mark.parametrize("n", [2, 4, 6])
    def test_super_trace_matches_even_powers(self, n):
        params = GrapheneParams(1.0, 0.0, 0.6)
        o = HermitianOperator(closed_generator(params))
        explicit = np.trace(np.linalg.matrix_power(superoperator(o), n)).real
        assert closed_super_trace(params, n) == pytest.approx(explicit, rel=1e-10)
        assert 16 * super_moments(o, n).h[n] == pytest.approx(explicit, rel=1e-10)

    def test_literal_ladder_enters_through_four_gamma(self):
        params = GrapheneParams(1.0, 0.3, 0.4, PmConvention.COMPLEX, LadderConvention.LITERAL)
        half = GrapheneParams(4.0, 0.3, 0.4, PmConvention.COMPLEX)
        assert params.effective_gamma == 4.0
        gen = solve_generator(graphene_hamiltonians(params))
        np.testing.assert_allclose(gen.o.entries, closed_generator(params), atol=1e-10)
        np.testing.assert_allclose(gen.o.entries, closed_generator(half), atol=1e-10)
        assert sinc_coefficients(params) == sinc_coefficients(half)
        np.testing.assert_array_equal(closed_variational(params), closed_variational(half))


class TestSweep:
    def test_zero_momentum_is_skipped(self):
        result = graphene_sweep(1.0, [0.0, 0.1, 0.2])
        assert result.metadata["skipped"] == [0.0]
        np.testing.assert_allclose(result.abscissa, [0.1, 0.2])

    def test_variational_beats_second_order(self):
        grid = np.linspace(0.01, 0.85, 60)
        result = graphene_sweep(1.0, grid)
        std, var = result.columns["delta_std"], result.columns["delta_var"]
        assert np.all(var < std)
        assert np.min(var / std) <= 1e-2
        np.testing.assert_allclose(std, grid**2, rtol=0.5)

    def test_rotational_symmetry(self):
        grid = np.linspace(0.05, 1.0, 12)
        along_p1 = graphene_sweep(1.0, grid, PmConvention.COMPLEX, angle=0.0)
        along_p2 = graphene_sweep(1.0, grid, PmConvention.COMPLEX, angle=math.pi / 2)
        for name in ("delta_std", "delta_var"):
            np.testing.assert_allclose(along_p1.columns[name], along_p2.columns[name], atol=1e-9)

    def test_ode_source_matches_sinc_source(self):
        grid = np.linspace(0.1, 1.0, 10)
        sinc = graphene_sweep(1.0, grid, PmConvention.COMPLEX)
        ode = graphene_sweep(1.0, grid, PmConvention.COMPLEX, source=CoefficientSource.ODE)
        for name in ("delta_std", "delta_var"):
            np.testing.assert_allclose(
                ode.columns[name], sinc.columns[name], rtol=1e-6, atol=1e-10
            )

    def test_thread_count_does_not_change_results(self):
        grid = np.linspace(0.05, 1.0, 16)
        serial = graphene_sweep(1.0, grid)
        threaded = graphene_sweep(1.0, grid, threads=4)
        for name in serial.columns:
            np.testing.assert_array_equal(serial.columns[name], threaded.columns[name])

    @pytest.mark.parametrize("convention", list(PmConvention))
    def test_literal_ladder_sources_agree(self, convention):
        grid = np.linspace(0.05, 0.2, 4)
        sinc = graphene_sweep(1.0, grid, convention, LadderConvention.LITERAL)
        ode = graphene_sweep(
            1.0, grid, convention, LadderConvention.LITERAL, source=CoefficientSource.ODE
        )
        for name in ("delta_std", "delta_var"):
            np.testing.assert_allclose(
                sinc.columns[name], ode.columns[name], rtol=1e-6, atol=1e-10
            )
        assert np.all(sinc.columns["delta_std"] < 1e-2)
        assert np.all(sinc.columns["delta_var"] < sinc.columns["delta_std"])


class TestConventionVerdict:
    def _sweeps(self, angle):
        grid = np.linspace(0.05, 0.85, 20)
        return {c: graphene_sweep(1.0, grid, c, angle=angle) for c in PmConvention}

    def test_complex_tracks_exact_levels_off_axis(self):
        verdict = convention_verdict(self._sweeps(0.7))
        assert verdict["tracks_exact"] == "complex"
        assert verdict["complex"]["fraction_improved"] > verdict["real"]["fraction_improved"]
        assert verdict["complex"]["median_delta_var"] < verdict["real"]["median_delta_var"]

    def test_tie_on_the_p2_axis(self):
        verdict = convention_verdict(self._sweeps(math.pi / 2))
        assert verdict["tracks_exact"] == "tie"
        assert verdict["real"] == pytest.approx(verdict["complex"], rel=1e-6)

    def test_empty_sweep(self):
        verdict = convention_verdict({PmConvention.REAL: graphene_sweep(1.0, [0.0])})
        assert verdict == {
            "real": {"fraction_improved": None, "median_delta_var": None},
            "tracks_exact": None,
        }
