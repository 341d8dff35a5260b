"""Non-perturbative degenerate perturbation theory through the adjoint superoperator.

The unitary transform exp(-i[O, .]) is the exponential of the superoperator
O (x) 1 - 1 (x) O^T at "time" 1, so the variational coefficients of
:mod:`varprop.propagator_approx` apply to it directly. Only the moments of
that superoperator are needed; they follow from eigenvalue differences of O.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import DimensionMismatchError, NonOrthonormalBasisError
from .propagator_approx import OdeSolverConfig, variational_coefficients
from .spectral_core import HermitianOperator, MomentTable, operator_norm

logger = logging.getLogger(__name__)

DEGENERACY_TOL = 1e-9
ORTHONORMALITY_TOL = 1e-10
MAX_EXPLICIT_SUPEROPERATOR_DIM = 8
# Bounds the pairwise-difference block held in memory while summing super-moments.
_PAIR_CHUNK_ELEMENTS = 4_000_000

Coefficients = Tuple[complex, complex, complex]


@dataclass(frozen=True)
class PerturbationSplit:
    h0: HermitianOperator
    v: HermitianOperator

    def __post_init__(self):
        if self.h0.dim != self.v.dim:
            raise DimensionMismatchError(
                f"H0 has dim {self.h0.dim} but V has dim {self.v.dim}"
            )

    @property
    def dim(self) -> int:
        return self.h0.dim

    @property
    def full(self) -> HermitianOperator:
        return self.h0 + self.v


@dataclass(frozen=True)
class Generator:
    o: HermitianOperator
    # |offdiagonal-block part of V - i[O, H0]|_F, blocks = distinct H0 eigenvalues
    first_order_residual: float
    # |block-diagonal part of V|_F, out of reach of any first-order generator
    block_diagonal_remainder: float


@dataclass(frozen=True)
class SuperMomentTable:
    """h[n] = tr(Otilde^n) / D^2 with Otilde = O (x) 1 - 1 (x) O^T."""

    h: np.ndarray

    @property
    def max_order(self) -> int:
        return len(self.h) - 1

    def as_moment_table(self) -> MomentTable:
        return MomentTable(self.h)


@dataclass(frozen=True)
class DownfoldResult:
    coefficients: Coefficients
    h_effective: HermitianOperator
    projector_basis: np.ndarray
    asymmetry: float


def commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a


def nested_commutator(o: np.ndarray, a: np.ndarray, order: int) -> np.ndarray:
    """[O, [O, ... [O, A]]] with `order` nested brackets."""
    out = a
    for _ in range(order):
        out = commutator(o, out)
    return out


def _degeneracy_mask(h0: HermitianOperator, degeneracy_tol: float):
    spec = h0.spectrum
    energies = spec.eigenvalues
    gaps = energies[:, None] - energies[None, :]
    threshold = degeneracy_tol * max(1.0, operator_norm(h0))
    return spec.eigenvectors, energies, gaps, np.abs(gaps) > threshold


def decoupling_residuals(
    split: PerturbationSplit, o: np.ndarray, degeneracy_tol: float = DEGENERACY_TOL
) -> Tuple[float, float]:
    """(first-order residual, block-diagonal remainder) for a candidate generator."""
    w, energies, _, coupled = _degeneracy_mask(split.h0, degeneracy_tol)
    v_eig = w.conj().T @ split.v.entries @ w
    o_eig = w.conj().T @ np.asarray(o) @ w
    # [O, H0]_ab = O_ab (E_b - E_a) in the H0 eigenbasis
    x_eig = v_eig - 1j * o_eig * (energies[None, :] - energies[:, None])
    return (
        float(np.linalg.norm(x_eig[coupled])),
        float(np.linalg.norm(v_eig[~coupled])),
    )


def solve_generator(
    split: PerturbationSplit, degeneracy_tol: float = DEGENERACY_TOL
) -> Generator:
    """O = i([H0, .])^+ V: O_ab = i V_ab / (E_a - E_b) between distinct H0 levels."""
    w, _, gaps, coupled = _degeneracy_mask(split.h0, degeneracy_tol)
    v_eig = w.conj().T @ split.v.entries @ w
    o_eig = np.zeros_like(v_eig)
    o_eig[coupled] = 1j * v_eig[coupled] / gaps[coupled]
    o = HermitianOperator(w @ o_eig @ w.conj().T)

    residual, remainder = decoupling_residuals(split, o.entries, degeneracy_tol)
    logger.debug(
        "Generator: first-order residual %.3e, block-diagonal remainder %.3e",
        residual,
        remainder,
    )
    return Generator(o, residual, remainder)


def super_moments_from_eigenvalues(
    eigenvalues: np.ndarray, max_order: int
) -> SuperMomentTable:
    """(1/D^2) sum_ij (lambda_i - lambda_j)^n, accumulated in row chunks."""
    lam = np.asarray(eigenvalues, dtype=float)
    dim = len(lam)
    totals = np.zeros(max_order + 1)
    chunk = max(1, _PAIR_CHUNK_ELEMENTS // dim)
    for start in range(0, dim, chunk):
        diff = lam[start : start + chunk, None] - lam[None, :]
        power = np.ones_like(diff)
        for n in range(max_order + 1):
            totals[n] += power.sum()
            power *= diff
    h = totals / float(dim) ** 2
    h[0] = 1.0
    h.setflags(write=False)
    return SuperMomentTable(h)


def super_moments(o: HermitianOperator, max_order: int = 5) -> SuperMomentTable:
    return super_moments_from_eigenvalues(o.spectrum.eigenvalues, max_order)


def superoperator(o: HermitianOperator, force: bool = False) -> np.ndarray:
    """Explicit D^2 x D^2 matrix O (x) 1 - 1 (x) O^T; only for small cross-checks."""
    if o.dim > MAX_EXPLICIT_SUPEROPERATOR_DIM and not force:
        raise ValueError(
            f"Refusing to materialize a {o.dim ** 2}-dimensional superoperator"
        )
    identity = np.eye(o.dim)
    return np.kron(o.entries, identity) - np.kron(identity, o.entries.T)


def downfold_coefficients(
    sm: SuperMomentTable, cfg: Optional[OdeSolverConfig] = None
) -> Coefficients:
    """Variational n* = 2 coefficients of exp(-i Otilde t) at t = 1."""
    # Endpoint coefficients shrink like |O|^j; the integrator's absolute
    # tolerance would swamp them, the exponential of the scaled system does not.
    cfg = replace(cfg or OdeSolverConfig(), expm_shortcut=True)
    trajectory = variational_coefficients(sm.as_moment_table(), 2, [0.0, 1.0], cfg)
    c0, c1, c2 = trajectory.coeffs[-1]
    return complex(c0), complex(c1), complex(c2)


def check_orthonormal(basis: np.ndarray) -> np.ndarray:
    basis = np.asarray(basis, dtype=complex)
    if basis.ndim != 2:
        raise NonOrthonormalBasisError("Projector basis must be a matrix of column vectors")
    overlap = basis.conj().T @ basis
    deviation = float(np.max(np.abs(overlap - np.eye(basis.shape[1]))))
    if deviation > ORTHONORMALITY_TOL:
        raise NonOrthonormalBasisError(
            f"Projector basis is not orthonormal (max deviation {deviation:.3e})"
        )
    return basis


def projector_from_indices(dim: int, indices: Sequence[int]) -> np.ndarray:
    """Columns of the identity selecting the given basis states, in order."""
    basis = np.zeros((dim, len(indices)), dtype=complex)
    basis[list(indices), np.arange(len(indices))] = 1.0
    return basis


def _project(operator: np.ndarray, basis: np.ndarray) -> Tuple[HermitianOperator, float]:
    projected = basis.conj().T @ operator @ basis
    asymmetry = float(np.max(np.abs(projected - projected.conj().T)))
    return HermitianOperator(0.5 * (projected + projected.conj().T)), asymmetry


def effective_hamiltonian(
    split: PerturbationSplit,
    gen: Generator,
    c: Coefficients,
    projector_basis: np.ndarray,
) -> DownfoldResult:
    """P^H [c0 H + c1 [O, H] + c2 [O, [O, H]]] P with H = H0 + V."""
    basis = check_orthonormal(projector_basis)
    if basis.shape[0] != split.dim:
        raise DimensionMismatchError(
            f"Projector basis has {basis.shape[0]} rows, operators have dim {split.dim}"
        )
    h = split.full.entries
    o = gen.o.entries
    first = commutator(o, h)
    second = commutator(o, first)
    c0, c1, c2 = c
    h_prime = c0 * h + c1 * first + c2 * second

    h_eff, asymmetry = _project(h_prime, basis)
    if asymmetry > ORTHONORMALITY_TOL * max(1.0, float(np.max(np.abs(h_eff.entries)))):
        logger.warning("Projected effective Hamiltonian had asymmetry %.3e", asymmetry)
    return DownfoldResult(tuple(complex(x) for x in c), h_eff, basis, asymmetry)


def standard_second_order(
    split: PerturbationSplit, gen: Generator, projector_basis: np.ndarray
) -> HermitianOperator:
    """P^H (H0 - (i/2)[O, V]) P, ordinary degenerate second-order theory."""
    basis = check_orthonormal(projector_basis)
    h2 = split.h0.entries - 0.5j * commutator(gen.o.entries, split.v.entries)
    h_eff, _ = _project(h2, basis)
    return h_eff
