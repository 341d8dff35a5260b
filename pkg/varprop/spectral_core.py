"""Dense Hermitian linear algebra shared by every approximant and model.

One eigendecomposition per operator serves the moments, the operator norm
and the exact propagator; it is computed lazily and cached on the operator.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from ._compat import StrEnum
from functools import cached_property
from typing import Callable, Iterator, List, Union

import numpy as np
import scipy.linalg

from .errors import (
    DimensionMismatchError,
    EigensolverError,
    InsufficientMomentsError,
    NotHermitianError,
)

logger = logging.getLogger(__name__)

# Asymmetry above this (relative to max(1, |A|_max)) is rejected, below it is repaired.
HERMITICITY_REPAIR_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class HermitianOperator:
    """Dense complex square matrix, symmetrized on construction."""

    entries: np.ndarray

    def __post_init__(self):
        a = np.array(self.entries, dtype=complex)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise ValueError(f"Expected a non-empty square matrix, got shape {a.shape}")

        scale = max(1.0, float(np.max(np.abs(a))))
        asymmetry = float(np.max(np.abs(a - a.conj().T)))
        if asymmetry > HERMITICITY_REPAIR_TOL * scale:
            raise NotHermitianError(
                f"Matrix is not Hermitian: max|A - A^H| = {asymmetry:.3e}"
            )
        if asymmetry > 0.0:
            logger.debug("Symmetrized operator with asymmetry %.3e", asymmetry)

        a = 0.5 * (a + a.conj().T)
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @cached_property
    def spectrum(self) -> Spectrum:
        return eigendecompose(self)

    def __add__(self, other: HermitianOperator) -> HermitianOperator:
        return HermitianOperator(self.entries + other.entries)

    def scaled(self, factor: float) -> HermitianOperator:
        return HermitianOperator(float(factor) * self.entries)


@dataclass(frozen=True)
class Spectrum:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


@dataclass(frozen=True)
class MomentTable:
    """Normalized traces h[n] = tr(H^n) / D for n = 0..max_order."""

    h: np.ndarray

    @property
    def max_order(self) -> int:
        return len(self.h) - 1

    def __getitem__(self, n: int) -> float:
        return float(self.h[n])

    @classmethod
    def from_eigenvalues(cls, eigenvalues: np.ndarray, max_order: int) -> MomentTable:
        if max_order < 0:
            raise ValueError("max_order must be non-negative")
        lam = np.asarray(eigenvalues, dtype=float)
        h = np.power.outer(lam, np.arange(max_order + 1)).mean(axis=0)
        h[0] = 1.0
        h.setflags(write=False)
        return cls(h)

    def rescaled(self, scale: float) -> MomentTable:
        """Moments of H / scale."""
        h = self.h / float(scale) ** np.arange(len(self.h))
        h.setflags(write=False)
        return MomentTable(h)


class Method(StrEnum):
    EXACT = "exact"
    TAYLOR = "taylor"
    KPM = "kpm"
    VARIATIONAL = "variational"
    VARIATIONAL_CLOSED_FORM = "closed-form"
    RESIDUAL_ACTION = "residual-action"


@dataclass(frozen=True)
class PropagatorMatrix:
    entries: np.ndarray
    time: float
    method: Method

    @property
    def dim(self) -> int:
        return self.entries.shape[0]


MatrixLike = Union[PropagatorMatrix, np.ndarray]


def eigendecompose(H: HermitianOperator) -> Spectrum:
    """Eigenvalues ascending with unitary eigenvectors as columns."""
    try:
        eigenvalues, eigenvectors = scipy.linalg.eigh(H.entries)
    except (np.linalg.LinAlgError, ValueError) as e:
        raise EigensolverError(f"Eigendecomposition failed for dim {H.dim}: {e}") from e
    eigenvalues.setflags(write=False)
    eigenvectors.setflags(write=False)
    return Spectrum(eigenvalues, eigenvectors)


def operator_norm(H: HermitianOperator) -> float:
    return float(np.max(np.abs(H.spectrum.eigenvalues)))


def moments(H: HermitianOperator, max_order: int) -> MomentTable:
    return MomentTable.from_eigenvalues(H.spectrum.eigenvalues, max_order)


def function_of(
    H: HermitianOperator, f: Callable[[np.ndarray], np.ndarray]
) -> np.ndarray:
    """V f(Lambda) V^H for a scalar function applied to the spectrum."""
    spec = H.spectrum
    v = spec.eigenvectors
    return (v * f(spec.eigenvalues)) @ v.conj().T


def exact_propagator(H: HermitianOperator, t: float) -> PropagatorMatrix:
    if t < 0:
        raise ValueError(f"Time must be non-negative, got {t}")
    entries = function_of(H, lambda lam: np.exp(-1j * lam * t))
    return PropagatorMatrix(entries, float(t), Method.EXACT)


def _as_array(u: MatrixLike) -> np.ndarray:
    return u.entries if isinstance(u, PropagatorMatrix) else np.asarray(u)


def l2_distance(ua: MatrixLike, ub: MatrixLike) -> float:
    """|Ua - Ub|_Frob / (2 sqrt(D)); not clamped, truncated approximants may exceed 1."""
    a, b = _as_array(ua), _as_array(ub)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"Cannot compare shapes {a.shape} and {b.shape}")
    return float(np.linalg.norm(a - b) / (2.0 * np.sqrt(a.shape[0])))


def l2_distance_spectral(values_a: np.ndarray, values_b: np.ndarray) -> np.ndarray:
    """l2 distance between two functions of the same H, given on its eigenvalues.

    The last axis runs over eigenvalues; leading axes (e.g. time) are kept.
    """
    a, b = np.asarray(values_a), np.asarray(values_b)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"Cannot compare shapes {a.shape} and {b.shape}")
    dim = a.shape[-1]
    return np.sqrt(np.sum(np.abs(a - b) ** 2, axis=-1)) / (2.0 * np.sqrt(dim))


def gram_tensor(m: MomentTable, n_star: int) -> np.ndarray:
    """Hankel matrix G[j][k] = h[j+k], the metric of the polynomial ansatz."""
    if m.max_order < 2 * n_star:
        raise InsufficientMomentsError(
            f"Gram tensor of order {n_star} needs moments up to {2 * n_star}, "
            f"table stops at {m.max_order}"
        )
    h = m.h
    return scipy.linalg.hankel(h[: n_star + 1], h[n_star : 2 * n_star + 1]).astype(
        complex
    )


def quantum_distance(m: MomentTable, n_star: int, dc: np.ndarray) -> float:
    """|U(c + dc) - U(c)|^2 / D to second order in dc, i.e. dc^H G dc."""
    g = gram_tensor(m, n_star)
    dc = np.asarray(dc, dtype=complex)
    return float(np.real(dc.conj() @ g @ dc))


def gue_hamiltonian(dim: int, rng: np.random.Generator) -> HermitianOperator:
    """(M + M^H) / 2 with i.i.d. standard complex Gaussian entries."""
    m = (
        rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    ) / np.sqrt(2.0)
    return HermitianOperator(0.5 * (m + m.conj().T))


def sample_rngs(seed: int, samples: int) -> List[np.random.Generator]:
    """One independent generator per sample, derived from a single seed."""
    children = np.random.SeedSequence(seed).spawn(samples)
    return [np.random.default_rng(child) for child in children]


def gue_ensemble(dim: int, samples: int, seed: int) -> Iterator[HermitianOperator]:
    for rng in sample_rngs(seed, samples):
        yield gue_hamiltonian(dim, rng)
