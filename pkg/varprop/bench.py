"""Seeded random-Hamiltonian benchmark of the short-time approximants."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from .propagator_approx import (
    CollocationConfig,
    OdeSolverConfig,
    PolynomialPropagator,
    closed_form_trajectory,
    kpm_polynomial,
    residual_action_coefficients,
    taylor_polynomial,
    variational_coefficients,
)
from .spectral_core import (
    HermitianOperator,
    Method,
    gue_hamiltonian,
    l2_distance_spectral,
    moments,
    operator_norm,
    sample_rngs,
)
from .sweeps import run_indexed

logger = logging.getLogger(__name__)

BENCH_METHODS = (
    Method.TAYLOR,
    Method.KPM,
    Method.VARIATIONAL,
    Method.VARIATIONAL_CLOSED_FORM,
    Method.RESIDUAL_ACTION,
)


@dataclass(frozen=True)
class BenchSettings:
    dims: Sequence[int] = (5,)
    samples: int = 100
    seed: int = 42
    t_max: float = 2.0
    points: int = 100
    methods: Sequence[Method] = BENCH_METHODS
    taylor_order: int = 2
    n_star: int = 2

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("At least one sample is required")
        if self.points < 2 or self.t_max <= 0:
            raise ValueError("Normalized time grid needs t_max > 0 and at least 2 points")
        if any(d < 1 for d in self.dims):
            raise ValueError(f"Dimensions must be positive, got {list(self.dims)}")

    def t_norm_grid(self) -> np.ndarray:
        return np.linspace(0.0, self.t_max, self.points)


@dataclass(frozen=True)
class BenchRecord:
    method: Method
    dim: int
    t_norm: float
    l2_mean: float
    l2_std: float
    n: int


def approximant(
    method: Method,
    H: HermitianOperator,
    times: np.ndarray,
    settings: BenchSettings,
    cfg: Optional[OdeSolverConfig] = None,
    collocation: Optional[CollocationConfig] = None,
) -> PolynomialPropagator:
    """The requested approximant of exp(-iHt) on an absolute time grid."""
    if method == Method.TAYLOR:
        return taylor_polynomial(times, settings.taylor_order)
    if method == Method.KPM:
        return kpm_polynomial(times, operator_norm(H))

    m = moments(H, 2 * settings.n_star + 2)
    if method == Method.VARIATIONAL:
        return variational_coefficients(m, settings.n_star, times, cfg).polynomial()
    if method == Method.VARIATIONAL_CLOSED_FORM:
        return closed_form_trajectory(m, times).polynomial()
    if method == Method.RESIDUAL_ACTION:
        return residual_action_coefficients(m, settings.n_star, times, collocation).polynomial()
    raise ValueError(f"Method {method!r} is not a benchmarked approximant")


def sample_distances(
    H: HermitianOperator,
    settings: BenchSettings,
    cfg: Optional[OdeSolverConfig] = None,
    collocation: Optional[CollocationConfig] = None,
) -> Dict[Method, np.ndarray]:
    """l2 distance to the exact propagator per method along the normalized time grid.

    Every approximant is a polynomial in H, so all comparisons happen on the
    spectrum of H.
    """
    eigenvalues = H.spectrum.eigenvalues
    norm = operator_norm(H)
    times = settings.t_norm_grid() / (norm if norm > 0 else 1.0)
    exact = np.exp(-1j * np.outer(times, eigenvalues))
    return {
        method: l2_distance_spectral(
            approximant(method, H, times, settings, cfg, collocation).evaluate(eigenvalues),
            exact,
        )
        for method in settings.methods
    }


def aggregate_records(
    method: Method, dim: int, t_norm: np.ndarray, distances: np.ndarray
) -> List[BenchRecord]:
    """Mean and sample standard deviation over axis 0 (samples)."""
    n = distances.shape[0]
    mean = distances.mean(axis=0)
    std = distances.std(axis=0, ddof=1) if n > 1 else np.zeros_like(mean)
    return [
        BenchRecord(method, dim, float(t), float(mu), float(sd), n)
        for t, mu, sd in zip(t_norm, mean, std)
    ]


def bench_evolution(
    settings: BenchSettings,
    threads: int = 1,
    progress: bool = False,
    cfg: Optional[OdeSolverConfig] = None,
    collocation: Optional[CollocationConfig] = None,
) -> List[BenchRecord]:
    """Average l2 distances over a seeded GUE ensemble for every dimension and method."""
    t_norm = settings.t_norm_grid()
    records: List[BenchRecord] = []
    for dim in settings.dims:
        rngs = sample_rngs(settings.seed, settings.samples)
        per_sample = run_indexed(
            lambda rng: sample_distances(gue_hamiltonian(dim, rng), settings, cfg, collocation),
            rngs,
            threads,
            desc=f"dim={dim}",
            progress=progress,
        )
        for method in settings.methods:
            distances = np.stack([sample[method] for sample in per_sample])
            records.extend(aggregate_records(method, dim, t_norm, distances))
        logger.info("Benchmarked %d samples at dim %d", settings.samples, dim)
    return records
