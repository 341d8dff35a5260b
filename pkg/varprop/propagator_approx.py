"""Short-time approximants of exp(-iHt), all expressed as polynomials in H.

Every approximant produces a :class:`PolynomialPropagator`: a table of
coefficients c_j(t) multiplying H^j. It can be assembled into matrices or,
much more cheaply, evaluated on the eigenvalues of H.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
import scipy.special
from numpy.polynomial import chebyshev
from scipy.integrate import DOP853

from .errors import (
    DegenerateMomentsError,
    InsufficientMomentsError,
    IntegrationError,
    ResidualActionError,
)
from .spectral_core import (
    HermitianOperator,
    Method,
    MomentTable,
    PropagatorMatrix,
    gram_tensor,
    moments,
    operator_norm,
)

logger = logging.getLogger(__name__)

CLOSED_FORM_DEGENERACY_TOL = 1e-12
EXPM_MAX_CONDITION = 1e8


@dataclass(frozen=True)
class OdeSolverConfig:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    pseudoinverse_cutoff: float = 1e-10
    max_steps: int = 100_000
    expm_shortcut: bool = False

    def __post_init__(self):
        for name in ("rel_tol", "abs_tol", "pseudoinverse_cutoff", "max_steps"):
            if getattr(self, name) <= 0:
                raise ValueError(f"OdeSolverConfig.{name} must be positive")


@dataclass(frozen=True)
class CollocationConfig:
    points_per_unit_time: int = 64
    basis_degree: int = 24

    def __post_init__(self):
        if self.points_per_unit_time < 2 or self.basis_degree < 1:
            raise ValueError("CollocationConfig needs >= 2 points per unit time and degree >= 1")


@dataclass(frozen=True)
class PolynomialPropagator:
    """U(t) = sum_j coeffs[t, j] H^j on a grid of times."""

    times: np.ndarray
    coeffs: np.ndarray
    method: Method

    @property
    def order(self) -> int:
        return self.coeffs.shape[1] - 1

    def evaluate(self, eigenvalues: np.ndarray) -> np.ndarray:
        """Scalar values p_t(lambda), shape (len(times), len(eigenvalues))."""
        return np.polynomial.polynomial.polyval(
            np.asarray(eigenvalues, dtype=float), self.coeffs.T
        )

    def assemble(self, H: HermitianOperator) -> List[PropagatorMatrix]:
        powers = [np.eye(H.dim, dtype=complex)]
        for _ in range(self.order):
            powers.append(powers[-1] @ H.entries)
        return [
            PropagatorMatrix(
                sum(c * p for c, p in zip(row, powers)), float(t), self.method
            )
            for t, row in zip(self.times, self.coeffs)
        ]


@dataclass(frozen=True)
class CoefficientTrajectory:
    n_star: int
    times: np.ndarray
    coeffs: np.ndarray
    method: Method
    objective: Optional[float] = field(default=None)

    def __post_init__(self):
        if self.times.ndim != 1 or self.times[0] != 0.0:
            raise ValueError("Coefficient trajectories start at t = 0")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("Trajectory times must be strictly increasing")
        if self.coeffs.shape != (len(self.times), self.n_star + 1):
            raise ValueError(f"Unexpected coefficient shape {self.coeffs.shape}")

    def polynomial(self) -> PolynomialPropagator:
        return PolynomialPropagator(self.times, self.coeffs, self.method)


def _time_grid(t_grid: Sequence[float]) -> np.ndarray:
    times = np.atleast_1d(np.asarray(t_grid, dtype=float))
    if times.ndim != 1 or len(times) == 0 or times[0] != 0.0:
        raise ValueError("Time grids must be one-dimensional and start at 0")
    if np.any(np.diff(times) <= 0):
        raise ValueError("Time grids must be strictly increasing")
    return times


def _unit_start(n_star: int) -> np.ndarray:
    c0 = np.zeros(n_star + 1, dtype=complex)
    c0[0] = 1.0
    return c0


def _moment_scale(m: MomentTable) -> float:
    """RMS eigenvalue, the natural unit for integrating the coefficient ODEs."""
    if m.max_order >= 2 and m[2] > 0.0:
        return math.sqrt(m[2])
    if m.max_order >= 1 and m[1] != 0.0:
        return abs(m[1])
    return 1.0


# -- Taylor ------------------------------------------------------------------


def taylor_polynomial(t_grid: Sequence[float], order: int = 2) -> PolynomialPropagator:
    if order < 0:
        raise ValueError("Taylor order must be non-negative")
    times = np.atleast_1d(np.asarray(t_grid, dtype=float))
    j = np.arange(order + 1)
    factorials = np.array([math.factorial(k) for k in j], dtype=float)
    coeffs = (-1j * times[:, None]) ** j / factorials
    return PolynomialPropagator(times, coeffs, Method.TAYLOR)


def taylor_propagator(H: HermitianOperator, t: float, order: int = 2) -> PropagatorMatrix:
    return taylor_polynomial([t], order).assemble(H)[0]


# -- Kernel polynomial (Chebyshev-Bessel) --------------------------------------


@lru_cache(maxsize=None)
def resolve_kpm_convention() -> int:
    """Sign s of the constant term J0 + s*2*J2 that matches exp(-ixt) on [-1, 1].

    For each sampled t the least-squares optimal constant (linear and quadratic
    Chebyshev terms held fixed) is compared with both candidates.
    """
    x = np.linspace(-1.0, 1.0, 401)
    misfit = {+1: 0.0, -1: 0.0}
    for tau in np.linspace(0.1, 2.0, 20):
        j0, j1, j2 = scipy.special.jv([0, 1, 2], tau)
        best = np.mean(np.exp(-1j * x * tau) + 2j * j1 * x + 4.0 * j2 * x**2)
        for sign in misfit:
            misfit[sign] += abs(best - (j0 + sign * 2.0 * j2)) ** 2

    sign = min(misfit, key=misfit.get)
    if sign != -1:
        logger.warning(
            "KPM constant term: J0 - 2*J2 misfit %.3e vs J0 + 2*J2 misfit %.3e; using J0 + 2*J2",
            misfit[-1],
            misfit[+1],
        )
    return sign


def kpm_polynomial(t_grid: Sequence[float], norm: float) -> PolynomialPropagator:
    """Order-2 Chebyshev expansion with x = H / |H| and Bessel weights of t|H|."""
    times = np.atleast_1d(np.asarray(t_grid, dtype=float))
    coeffs = np.zeros((len(times), 3), dtype=complex)
    if norm == 0.0:
        coeffs[:, 0] = 1.0
        return PolynomialPropagator(times, coeffs, Method.KPM)

    sign = resolve_kpm_convention()
    tau = times * norm
    j0, j1, j2 = (scipy.special.jv(k, tau) for k in range(3))
    coeffs[:, 0] = j0 + sign * 2.0 * j2
    coeffs[:, 1] = -2j * j1 / norm
    coeffs[:, 2] = -4.0 * j2 / norm**2
    return PolynomialPropagator(times, coeffs, Method.KPM)


def kpm_propagator(H: HermitianOperator, t: float) -> PropagatorMatrix:
    return kpm_polynomial([t], operator_norm(H)).assemble(H)[0]


# -- Variational polynomial ansatz -------------------------------------------


def _integrate_linear(
    generator: np.ndarray, tau: np.ndarray, y0: np.ndarray, cfg: OdeSolverConfig
) -> np.ndarray:
    """Integrate dy/dt = generator @ y with DOP853, sampling the dense output."""
    out = np.empty((len(tau), len(y0)), dtype=complex)
    out[0] = y0
    if len(tau) == 1:
        return out

    solver = DOP853(
        lambda _t, y: generator @ y,
        tau[0],
        y0,
        tau[-1],
        rtol=cfg.rel_tol,
        atol=cfg.abs_tol,
    )
    index, steps = 1, 0
    while index < len(tau):
        message = solver.step()
        steps += 1
        if solver.status == "failed":
            raise IntegrationError(f"Coefficient integration failed at t={solver.t}: {message}")
        if steps > cfg.max_steps:
            raise IntegrationError(
                f"Coefficient integration exceeded {cfg.max_steps} steps at t={solver.t}"
            )
        dense = solver.dense_output()
        while index < len(tau) and tau[index] <= solver.t:
            out[index] = dense(tau[index])
            index += 1
    return out


def variational_coefficients(
    m: MomentTable,
    n_star: int,
    t_grid: Sequence[float],
    cfg: Optional[OdeSolverConfig] = None,
) -> CoefficientTrajectory:
    """Solve G dc/dt = -i A c, c(0) = (1, 0, ..., 0).

    G[l][k] = h[l+k] and A[l][k] = h[l+k+1]. A singular G is handled by its
    pseudoinverse, i.e. each step is solved in the minimum-norm sense.
    """
    cfg = cfg or OdeSolverConfig()
    times = _time_grid(t_grid)
    if m.max_order < 2 * n_star + 1:
        raise InsufficientMomentsError(
            f"Order-{n_star} ansatz needs moments up to {2 * n_star + 1}, "
            f"table stops at {m.max_order}"
        )

    scale = _moment_scale(m)
    scaled = m.rescaled(scale)
    g = gram_tensor(scaled, n_star)
    h = scaled.h
    a = scipy.linalg.hankel(h[1 : n_star + 2], h[n_star + 1 : 2 * n_star + 2])

    g_pinv = scipy.linalg.pinv(g, atol=0.0, rtol=cfg.pseudoinverse_cutoff)
    generator = -1j * g_pinv @ a
    condition = np.linalg.cond(g)
    if not np.isfinite(condition) or condition * cfg.pseudoinverse_cutoff >= 1.0:
        logger.debug("Gram tensor is singular (cond=%.3e); using its pseudoinverse", condition)

    tau = times * scale
    c0 = _unit_start(n_star)
    if cfg.expm_shortcut and condition < EXPM_MAX_CONDITION:
        coeffs = np.array([scipy.linalg.expm(generator * s) @ c0 for s in tau])
    else:
        coeffs = _integrate_linear(generator, tau, c0, cfg)

    coeffs = coeffs / scale ** np.arange(n_star + 1)
    return CoefficientTrajectory(n_star, times, coeffs, Method.VARIATIONAL)


def variational_propagator(
    H: HermitianOperator,
    t_grid: Sequence[float],
    n_star: int = 2,
    cfg: Optional[OdeSolverConfig] = None,
) -> List[PropagatorMatrix]:
    trajectory = variational_coefficients(moments(H, 2 * n_star + 2), n_star, t_grid, cfg)
    return trajectory.polynomial().assemble(H)


# -- Closed-form n* = 2 coefficients -------------------------------------------


def closed_form_cubic_quartic(m: MomentTable) -> Tuple[complex, complex, complex, complex]:
    """(c13, c14, c23, c24), the t^3 and t^4 corrections with c0 pinned to 1."""
    if m.max_order < 4:
        raise InsufficientMomentsError("Closed-form coefficients need moments up to h4")
    h1, h2, h3, h4 = m[1], m[2], m[3], m[4]
    denominator = h1 * h3 - h2**2
    if abs(denominator) < CLOSED_FORM_DEGENERACY_TOL * max(1.0, h2**2):
        raise DegenerateMomentsError(
            f"h1*h3 - h2^2 = {denominator:.3e}; closed-form coefficients are undefined"
        )
    c13 = (1j / 6.0) * (h3**2 - h2 * h4) / denominator
    c14 = (1.0 / 24.0) * h3 * h4 / denominator
    c23 = (1j / 6.0) * (h1 * h4 - h2 * h3) / denominator
    c24 = -(1.0 / 24.0) * h2 * h4 / denominator
    return c13, c14, c23, c24


def closed_form_coefficients(m: MomentTable, t: float) -> Tuple[complex, complex, complex]:
    c13, c14, c23, c24 = closed_form_cubic_quartic(m)
    c1 = -1j * t + c13 * t**3 + c14 * t**4
    c2 = -(t**2) / 2.0 + c23 * t**3 + c24 * t**4
    return 1.0 + 0.0j, complex(c1), complex(c2)


def closed_form_trajectory(m: MomentTable, t_grid: Sequence[float]) -> CoefficientTrajectory:
    times = _time_grid(t_grid)
    coeffs = np.array([closed_form_coefficients(m, t) for t in times])
    return CoefficientTrajectory(2, times, coeffs, Method.VARIATIONAL_CLOSED_FORM)


def closed_form_propagator(
    H: HermitianOperator, t_grid: Sequence[float]
) -> List[PropagatorMatrix]:
    return closed_form_trajectory(moments(H, 4), t_grid).polynomial().assemble(H)


# -- Residual action -------------------------------------------------------------


def _chebyshev_basis(s: np.ndarray, span: float, degree: int) -> Tuple[np.ndarray, np.ndarray]:
    """Shifted Chebyshev functions vanishing at s = 0 and their time derivatives."""
    x = 2.0 * s / span - 1.0
    values = np.empty((len(s), degree))
    derivatives = np.empty((len(s), degree))
    for k in range(1, degree + 1):
        c = np.zeros(k + 1)
        c[k] = 1.0
        values[:, k - 1] = chebyshev.chebval(x, c) - (-1.0) ** k
        derivatives[:, k - 1] = chebyshev.chebval(x, chebyshev.chebder(c)) * (2.0 / span)
    return values, derivatives


def residual_action_coefficients(
    m: MomentTable,
    n_star: int,
    t_grid: Sequence[float],
    collocation: Optional[CollocationConfig] = None,
) -> CoefficientTrajectory:
    """Minimize int dt tr[(i dU/dt - HU)(i dU/dt - HU)^H] / D with c(0) = (1, 0, ..., 0).

    The residual is a polynomial of degree n*+1 in H, so its trace is the
    quadratic form r^H K r with K the Hankel matrix of h[0..2n*+2]. The
    trajectory is optimized over the whole grid at once.
    """
    collocation = collocation or CollocationConfig()
    times = _time_grid(t_grid)
    if m.max_order < 2 * n_star + 2:
        raise InsufficientMomentsError(
            f"Residual action of order {n_star} needs moments up to {2 * n_star + 2}"
        )
    c0 = _unit_start(n_star)
    if len(times) == 1:
        return CoefficientTrajectory(
            n_star, times, c0[None, :], Method.RESIDUAL_ACTION, objective=0.0
        )

    scale = _moment_scale(m)
    h = m.rescaled(scale).h
    span = times[-1] * scale
    n_points = max(int(math.ceil(collocation.points_per_unit_time * span)) + 1, n_star + 3)
    degree = min(collocation.basis_degree, max(1, int(2.0 * math.sqrt(n_points))))
    s = np.linspace(0.0, span, n_points)
    weights = np.full(n_points, span / (n_points - 1))
    weights[[0, -1]] *= 0.5

    k_matrix = scipy.linalg.hankel(h[: n_star + 2], h[n_star + 1 : 2 * n_star + 3])
    w, vecs = scipy.linalg.eigh(k_matrix)
    root = np.sqrt(np.clip(w, 0.0, None))[:, None] * vecs.conj().T

    # r = i E dc/dt - S c, with E embedding the n*+1 powers and S shifting by one power.
    embed = np.eye(n_star + 2, n_star + 1)
    shift = np.eye(n_star + 2, n_star + 1, k=-1)
    identity = np.eye(n_star + 1)
    phi, dphi = _chebyshev_basis(s, span, degree)

    rows, rhs = [], []
    for p in range(n_points):
        design = 1j * embed @ np.kron(identity, dphi[p]) - shift @ np.kron(identity, phi[p])
        weight = math.sqrt(weights[p])
        rows.append(weight * root @ design)
        rhs.append(weight * root @ (shift @ c0))
    design_matrix = np.vstack(rows)
    target = np.concatenate(rhs)

    try:
        x, _, _, _ = scipy.linalg.lstsq(design_matrix, target, cond=1e-12)
    except (np.linalg.LinAlgError, ValueError) as e:
        raise ResidualActionError(f"Residual-action least squares failed: {e}") from e
    if not np.all(np.isfinite(x)):
        raise ResidualActionError("Residual-action least squares produced non-finite coefficients")

    objective = float(np.sum(np.abs(design_matrix @ x - target) ** 2)) * scale
    amplitudes = x.reshape(n_star + 1, degree)
    phi_grid, _ = _chebyshev_basis(times * scale, span, degree)
    coeffs = c0[None, :] + phi_grid @ amplitudes.T
    coeffs = coeffs / scale ** np.arange(n_star + 1)
    return CoefficientTrajectory(
        n_star, times, coeffs, Method.RESIDUAL_ACTION, objective=objective
    )


def residual_action_propagator(
    H: HermitianOperator,
    t_grid: Sequence[float],
    n_star: int = 2,
    collocation: Optional[CollocationConfig] = None,
) -> List[PropagatorMatrix]:
    trajectory = residual_action_coefficients(
        moments(H, 2 * n_star + 2), n_star, t_grid, collocation
    )
    return trajectory.polynomial().assemble(H)
