"""AB bilayer graphene k.p model and its downfolding onto the low-energy pair.

Basis order is (layer, sublattice) with index 2*layer + sublattice; the
low-energy subspace is spanned by basis states 1 and 2.

The closed formulas are written for half-normalized ladders. Literal ladders
make H0 four times larger, so they enter the closed formulas through an
effective coupling 4*gamma.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from ._compat import StrEnum
from typing import Any, Dict, Mapping, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from .propagator_approx import OdeSolverConfig
from .spectral_core import HermitianOperator
from .superop_downfold import (
    PerturbationSplit,
    downfold_coefficients,
    effective_hamiltonian,
    projector_from_indices,
    solve_generator,
    standard_second_order,
    super_moments,
)
from .sweeps import CoefficientSource, SweepResult, run_indexed

logger = logging.getLogger(__name__)

LOW_ENERGY_INDICES = (1, 2)
ZERO_LEVEL_TOL = 1e-14
CONVENTION_TIE_RTOL = 1e-6

IDENTITY2 = np.eye(2, dtype=complex)
SIGMA1 = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA2 = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA3 = np.array([[1, 0], [0, -1]], dtype=complex)


class PmConvention(StrEnum):
    REAL = "real"  # p_pm = p1 pm p2
    COMPLEX = "complex"  # p_pm = p1 pm i p2


class LadderConvention(StrEnum):
    HALF = "half"  # (s1 pm i s2) / 2
    LITERAL = "literal"  # s1 pm i s2


@dataclass(frozen=True)
class GrapheneParams:
    gamma: float = 1.0
    p1: float = 0.0
    p2: float = 0.0
    pm_convention: PmConvention = PmConvention.REAL
    ladder: LadderConvention = LadderConvention.HALF

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError(f"Interlayer coupling gamma must be positive, got {self.gamma}")

    @property
    def p(self) -> float:
        return math.hypot(self.p1, self.p2)

    @property
    def effective_gamma(self) -> float:
        """Coupling of the equivalent half-ladder model."""
        return self.gamma if self.ladder == LadderConvention.HALF else 4.0 * self.gamma

    def p_plus_minus(self) -> Tuple[complex, complex]:
        if self.pm_convention == PmConvention.COMPLEX:
            return complex(self.p1, self.p2), complex(self.p1, -self.p2)
        return complex(self.p1 + self.p2), complex(self.p1 - self.p2)


def sinc(x):
    """Unnormalized cardinal sine sin(x)/x with sinc(0) = 1."""
    return np.sinc(np.asarray(x) / np.pi)


def ladder_operators(ladder: LadderConvention) -> Tuple[np.ndarray, np.ndarray]:
    scale = 0.5 if ladder == LadderConvention.HALF else 1.0
    return scale * (SIGMA1 + 1j * SIGMA2), scale * (SIGMA1 - 1j * SIGMA2)


def graphene_hamiltonians(params: GrapheneParams) -> PerturbationSplit:
    """H0 = gamma (tau+ sigma+ + tau- sigma-), V = 1 (x) (p1 sigma1 + p2 sigma2)."""
    plus, minus = ladder_operators(params.ladder)
    h0 = params.gamma * (np.kron(plus, plus) + np.kron(minus, minus))
    v = np.kron(IDENTITY2, params.p1 * SIGMA1 + params.p2 * SIGMA2)
    return PerturbationSplit(HermitianOperator(h0), HermitianOperator(v))


def low_energy_basis() -> np.ndarray:
    return projector_from_indices(4, LOW_ENERGY_INDICES)


def closed_generator(params: GrapheneParams) -> np.ndarray:
    """-(p1 tau2 + p2 tau1) / gamma (x) sigma3."""
    layer = -(params.p1 * SIGMA2 + params.p2 * SIGMA1) / params.effective_gamma
    return np.kron(layer, SIGMA3)


def _pair_operator(params: GrapheneParams) -> np.ndarray:
    """p+^2 sigma+ + p-^2 sigma- on the low-energy pair, half-normalized sigma+-."""
    plus, minus = ladder_operators(LadderConvention.HALF)
    p_plus, p_minus = params.p_plus_minus()
    return p_plus**2 * plus + p_minus**2 * minus


def closed_second_order(params: GrapheneParams) -> np.ndarray:
    """H^(2) = -(p+^2 sigma+ + p-^2 sigma-) / gamma; with real p+- it is not Hermitian off-axis."""
    return -_pair_operator(params) / params.effective_gamma


def sinc_coefficients(params: GrapheneParams) -> Tuple[complex, complex]:
    """(c1, c2) = (-i sinc(2p/gamma), -sinc(p/gamma)^2 / 2) at superoperator time 1."""
    x = params.p / params.effective_gamma
    return complex(-1j * sinc(2.0 * x)), complex(-0.5 * sinc(x) ** 2)


def closed_variational(params: GrapheneParams) -> np.ndarray:
    """H^(2,var) = [sinc^2(p/gamma) - 2 sinc(2p/gamma)] / gamma (p+^2 sigma+ + p-^2 sigma-)."""
    x = params.p / params.effective_gamma
    prefactor = (sinc(x) ** 2 - 2.0 * sinc(2.0 * x)) / params.effective_gamma
    return prefactor * _pair_operator(params)


def closed_super_trace(params: GrapheneParams, n: int) -> float:
    """The closed trace formula 2^(n+2) [(p/gamma)^n + (-p/gamma)^n], stated for tr(Otilde^(2n)).

    Numerically this equals tr(Otilde^n) for even n, not tr(Otilde^(2n)).
    """
    x = params.p / params.effective_gamma
    return 2.0 ** (n + 2) * (x**n + (-x) ** n)


def _sorted_real_eigenvalues(matrix: np.ndarray) -> np.ndarray:
    return np.sort(np.real(scipy.linalg.eigvals(matrix)))


def generic_downfold(
    params: GrapheneParams, cfg: Optional[OdeSolverConfig] = None
) -> Tuple[HermitianOperator, HermitianOperator, Tuple[complex, complex, complex]]:
    """(standard, variational, coefficients) through the pseudoinverse/superoperator path."""
    split = graphene_hamiltonians(params)
    gen = solve_generator(split)
    coefficients = downfold_coefficients(super_moments(gen.o, 5), cfg)
    basis = low_energy_basis()
    standard = standard_second_order(split, gen, basis)
    improved = effective_hamiltonian(split, gen, coefficients, basis).h_effective
    return standard, improved, coefficients


def _mid_levels(params: GrapheneParams) -> np.ndarray:
    energies = scipy.linalg.eigvalsh(graphene_hamiltonians(params).full.entries)
    return np.sort(energies[np.argsort(np.abs(energies), kind="stable")[:2]])


def _sweep_point(
    params: GrapheneParams, source: CoefficientSource, cfg: Optional[OdeSolverConfig]
) -> Optional[Tuple[float, float]]:
    exact = _mid_levels(params)
    if np.min(np.abs(exact)) < ZERO_LEVEL_TOL:
        return None
    if source == CoefficientSource.SINC:
        standard = _sorted_real_eigenvalues(closed_second_order(params))
        improved = _sorted_real_eigenvalues(closed_variational(params))
    else:
        h_std, h_var, _ = generic_downfold(params, cfg)
        standard = scipy.linalg.eigvalsh(h_std.entries)
        improved = scipy.linalg.eigvalsh(h_var.entries)
    return (
        float(np.max(np.abs((exact - standard) / exact))),
        float(np.max(np.abs((exact - improved) / exact))),
    )


def graphene_sweep(
    gamma: float,
    p_grid: Sequence[float],
    convention: PmConvention = PmConvention.REAL,
    ladder: LadderConvention = LadderConvention.HALF,
    angle: float = math.pi / 2,
    source: CoefficientSource = CoefficientSource.SINC,
    cfg: Optional[OdeSolverConfig] = None,
    threads: int = 1,
    progress: bool = False,
) -> SweepResult:
    """Relative mismatch of the two mid-spectrum levels along one momentum direction.

    angle = pi/2 sweeps the p2 axis. Each point stores the larger mismatch of
    the two levels. Points where the exact level vanishes are skipped and
    listed in the metadata.
    """
    grid = [float(p) for p in p_grid]
    points = [
        GrapheneParams(gamma, p * math.cos(angle), p * math.sin(angle), convention, ladder)
        for p in grid
    ]
    deltas = run_indexed(
        lambda params: _sweep_point(params, source, cfg),
        points,
        threads,
        desc="Momentum points",
        progress=progress,
    )

    kept = [(p, d) for p, d in zip(grid, deltas) if d is not None]
    skipped = [p for p, d in zip(grid, deltas) if d is None]
    if skipped:
        logger.info("Skipped %d momentum point(s) with vanishing exact level", len(skipped))
    return SweepResult(
        "p2",
        np.array([p for p, _ in kept]),
        {
            "delta_std": np.array([d[0] for _, d in kept]),
            "delta_var": np.array([d[1] for _, d in kept]),
        },
        {
            "gamma": gamma,
            "convention": str(convention),
            "ladder": str(ladder),
            "angle": angle,
            "source": str(source),
            "skipped": skipped,
        },
    )


def convention_verdict(
    sweeps: Mapping[PmConvention, SweepResult], rtol: float = CONVENTION_TIE_RTOL
) -> Dict[str, Any]:
    """Per-convention improvement statistics and the convention whose variational
    levels stay closest to the exact ones (smallest median delta_var).

    "tie" when the medians agree to rtol, as they do on the momentum axes.
    """
    summary: Dict[str, Any] = {}
    medians: Dict[PmConvention, float] = {}
    for convention, result in sweeps.items():
        std, var = result.columns["delta_std"], result.columns["delta_var"]
        if not len(var):
            summary[str(convention)] = {"fraction_improved": None, "median_delta_var": None}
            continue
        medians[convention] = float(np.median(var))
        summary[str(convention)] = {
            "fraction_improved": float(np.mean(var < std)),
            "median_delta_var": medians[convention],
        }

    if not medians:
        summary["tracks_exact"] = None
        return summary
    best = min(medians, key=medians.get)
    if all(math.isclose(m, medians[best], rel_tol=rtol) for m in medians.values()):
        summary["tracks_exact"] = "tie" if len(medians) > 1 else str(best)
    else:
        summary["tracks_exact"] = str(best)
    logger.info("p+- convention tracking the exact levels: %s", summary["tracks_exact"])
    return summary
