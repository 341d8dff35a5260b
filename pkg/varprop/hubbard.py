"""1D Hubbard chain, its Heisenberg downfolding and the t/U error sweep.

Fermionic modes are numbered 2*site + spin (up = 0, down = 1) and a Fock
state is the integer whose bit m is set when mode m is occupied. Creation
and annihilation operators follow that mode order (Jordan-Wigner), so
c+_a c_b picks up the parity of the occupied modes strictly between a and b.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from ._compat import StrEnum
from functools import lru_cache
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from .errors import ConfigError, DimensionMismatchError
from .propagator_approx import OdeSolverConfig
from .spectral_core import HermitianOperator
from .superop_downfold import (
    Generator,
    PerturbationSplit,
    SuperMomentTable,
    decoupling_residuals,
    downfold_coefficients,
    projector_from_indices,
    super_moments_from_eigenvalues,
)
from .sweeps import CoefficientSource, SweepResult, run_indexed

logger = logging.getLogger(__name__)

UP, DOWN = 0, 1
MAX_DEFAULT_SITES = 6
MAX_SITES = 7
ZERO_LEVEL_TOL = 1e-12
FILTER_WEIGHT_THRESHOLD = 0.5
FILTER_CHECK_MAX_T_OVER_U = 0.2

# (amplitude, a, b, required set bits, required clear bits) for amplitude c+_a c_b
HopTerm = Tuple[complex, int, int, int, int]


class Boundary(StrEnum):
    PERIODIC = "periodic"
    OPEN = "open"


def mode(site: int, spin: int) -> int:
    return 2 * site + spin


@dataclass(frozen=True)
class HubbardParams:
    n_sites: int
    hopping: float = 0.1
    interaction: float = 1.0
    boundary: Boundary = Boundary.PERIODIC

    def __post_init__(self):
        if self.n_sites < 2:
            raise ValueError(f"Hubbard chain needs at least 2 sites, got {self.n_sites}")
        if self.hopping < 0:
            raise ValueError(f"Hopping must be non-negative, got {self.hopping}")
        if self.interaction <= 0:
            raise ValueError(f"Interaction U must be positive, got {self.interaction}")

    @property
    def t_over_u(self) -> float:
        return self.hopping / self.interaction

    def bonds(self) -> List[Tuple[int, int]]:
        """Unique nearest-neighbour bonds; a periodic 2-site chain has one."""
        bonds = [(i, i + 1) for i in range(self.n_sites - 1)]
        if self.boundary == Boundary.PERIODIC and self.n_sites >= 3:
            bonds.append((self.n_sites - 1, 0))
        return bonds


@dataclass(frozen=True, eq=False)
class FockBasis:
    """Sorted occupation words of a subset of the 4^N Fock space."""

    n_sites: int
    states: np.ndarray

    def __post_init__(self):
        states = np.unique(np.asarray(self.states, dtype=np.int64))
        states.setflags(write=False)
        object.__setattr__(self, "states", states)

    @classmethod
    def full(cls, n_sites: int) -> FockBasis:
        return cls(n_sites, np.arange(4**n_sites, dtype=np.int64))

    @classmethod
    def sector(cls, n_sites: int, n_up: int, n_down: int) -> FockBasis:
        words = []
        for ups in itertools.combinations(range(n_sites), n_up):
            up_word = sum(1 << mode(i, UP) for i in ups)
            for downs in itertools.combinations(range(n_sites), n_down):
                words.append(up_word + sum(1 << mode(i, DOWN) for i in downs))
        return cls(n_sites, np.array(words, dtype=np.int64))

    @classmethod
    def half_filled(cls, n_sites: int) -> FockBasis:
        blocks = [cls.sector(n_sites, k, n_sites - k).states for k in range(n_sites + 1)]
        return cls(n_sites, np.concatenate(blocks))

    @property
    def dim(self) -> int:
        return len(self.states)

    def occupation(self, m: int) -> np.ndarray:
        return (self.states >> m) & 1

    def spin_counts(self) -> Tuple[np.ndarray, np.ndarray]:
        n_up = sum(self.occupation(mode(i, UP)) for i in range(self.n_sites))
        n_down = sum(self.occupation(mode(i, DOWN)) for i in range(self.n_sites))
        return np.asarray(n_up), np.asarray(n_down)

    def particle_numbers(self) -> np.ndarray:
        n_up, n_down = self.spin_counts()
        return n_up + n_down

    def two_sz(self) -> np.ndarray:
        n_up, n_down = self.spin_counts()
        return n_up - n_down

    def sectors(self) -> Dict[Tuple[int, int], np.ndarray]:
        """Basis positions keyed by (particle number, 2 S_z)."""
        keys = np.stack([self.particle_numbers(), self.two_sz()], axis=1)
        out: Dict[Tuple[int, int], np.ndarray] = {}
        for key in sorted({(int(n), int(s)) for n, s in keys}):
            out[key] = np.nonzero((keys[:, 0] == key[0]) & (keys[:, 1] == key[1]))[0]
        return out

    def positions(self, words: Sequence[int]) -> np.ndarray:
        words = np.asarray(words, dtype=np.int64)
        idx = np.searchsorted(self.states, words)
        inside = idx < self.dim
        if not np.all(inside) or np.any(self.states[idx[inside]] != words[inside]):
            raise DimensionMismatchError("Occupation word outside this Fock basis")
        return idx

    def index(self, word: int) -> int:
        return int(self.positions([word])[0])

    def doublons(self) -> np.ndarray:
        return sum(
            self.occupation(mode(i, UP)) & self.occupation(mode(i, DOWN))
            for i in range(self.n_sites)
        )

    def singly_occupied(self) -> np.ndarray:
        """Mask of states with exactly one electron on every site."""
        mask = np.ones(self.dim, dtype=bool)
        for i in range(self.n_sites):
            mask &= (self.occupation(mode(i, UP)) ^ self.occupation(mode(i, DOWN))) == 1
        return mask


def _popcount(words: np.ndarray) -> np.ndarray:
    words = np.array(words, dtype=np.int64)
    count = np.zeros_like(words)
    while np.any(words):
        count += words & 1
        words >>= 1
    return count


def _between_mask(a: int, b: int) -> int:
    lo, hi = min(a, b), max(a, b)
    return ((1 << hi) - 1) ^ ((1 << (lo + 1)) - 1)


def hopping_matrix(basis: FockBasis, terms: Iterable[HopTerm]) -> np.ndarray:
    """Dense matrix of sum amplitude * c+_a c_b, each term gated on spectator bits."""
    states = basis.states
    out = np.zeros((basis.dim, basis.dim), dtype=complex)
    for amplitude, a, b, set_bits, clear_bits in terms:
        allowed = (((states >> b) & 1) == 1) & (((states >> a) & 1) == 0)
        allowed &= (states & set_bits) == set_bits
        allowed &= (states & clear_bits) == 0
        src = np.nonzero(allowed)[0]
        if len(src) == 0:
            continue
        dst = basis.positions(states[src] ^ (1 << a) ^ (1 << b))
        sign = 1 - 2 * (_popcount(states[src] & _between_mask(a, b)) & 1)
        np.add.at(out, (dst, src), amplitude * sign)
    return out


def hopping_terms(params: HubbardParams, amplitude: float = 1.0) -> List[HopTerm]:
    terms: List[HopTerm] = []
    for i, j in params.bonds():
        for spin in (UP, DOWN):
            terms.append((amplitude, mode(i, spin), mode(j, spin), 0, 0))
            terms.append((amplitude, mode(j, spin), mode(i, spin), 0, 0))
    return terms


def generator_terms(params: HubbardParams, scale: float) -> List[HopTerm]:
    """-i scale sum_<ij>s (n_i,-s c+_is c_js h_j,-s - h_i,-s c+_is c_js n_j,-s), ordered pairs."""
    terms: List[HopTerm] = []
    for bond in params.bonds():
        for i, j in (bond, bond[::-1]):
            for spin in (UP, DOWN):
                a, b = mode(i, spin), mode(j, spin)
                partner_i, partner_j = 1 << mode(i, 1 - spin), 1 << mode(j, 1 - spin)
                terms.append((-1j * scale, a, b, partner_i, partner_j))
                terms.append((1j * scale, a, b, partner_j, partner_i))
    return terms


def hubbard_split(basis: FockBasis, params: HubbardParams) -> PerturbationSplit:
    """H0 = U sum_i n_i,up n_i,down (doublon count), V = -t sum_<ij>s c+_is c_js."""
    h0 = np.diag(params.interaction * basis.doublons().astype(float))
    v = hopping_matrix(basis, hopping_terms(params, -params.hopping))
    return PerturbationSplit(HermitianOperator(h0), HermitianOperator(v))


def hubbard_hamiltonian(basis: FockBasis, params: HubbardParams) -> HermitianOperator:
    return hubbard_split(basis, params).full


def hubbard_generator(basis: FockBasis, params: HubbardParams) -> Generator:
    o = hopping_matrix(basis, generator_terms(params, params.t_over_u))
    residual, remainder = decoupling_residuals(hubbard_split(basis, params), o)
    return Generator(HermitianOperator(o), residual, remainder)


def sinc_coefficients(params: HubbardParams) -> Tuple[complex, complex]:
    """c1 = -i sinc(a), c2 = -sinc(a/2)^2 / 2 with a = sqrt(3/2) t sqrt(2N+1) / U."""
    if params.n_sites < 3:
        raise ValueError("The closed sinc coefficients are stated for chains of 3 or more sites")
    a = math.sqrt(1.5) * params.t_over_u * math.sqrt(2 * params.n_sites + 1)
    s1, s2 = np.sinc(np.array([a, a / 2]) / np.pi)
    return complex(-1j * s1), complex(-0.5 * s2**2)


@lru_cache(maxsize=16)
def _unit_generator_super_moments(n_sites: int, boundary: Boundary) -> SuperMomentTable:
    """Super-moments of O at t/U = 1, from O's eigenvalues block by block in (N_up, N_down)."""
    params = HubbardParams(n_sites, hopping=1.0, interaction=1.0, boundary=boundary)
    terms = generator_terms(params, 1.0)
    eigenvalues = []
    for n_up in range(n_sites + 1):
        for n_down in range(n_sites + 1):
            block = FockBasis.sector(n_sites, n_up, n_down)
            eigenvalues.append(scipy.linalg.eigvalsh(hopping_matrix(block, terms)))
    return super_moments_from_eigenvalues(np.concatenate(eigenvalues), 5)


def generator_super_moments(params: HubbardParams) -> SuperMomentTable:
    unit = _unit_generator_super_moments(params.n_sites, params.boundary)
    h = unit.h * params.t_over_u ** np.arange(len(unit.h))
    h.setflags(write=False)
    return SuperMomentTable(h)


@dataclass(frozen=True)
class HubbardCoefficients:
    ode: Tuple[complex, complex, complex]
    sinc: Optional[Tuple[complex, complex]] = None

    def select(self, source: CoefficientSource) -> Tuple[complex, complex]:
        if source == CoefficientSource.SINC:
            if self.sinc is None:
                raise ValueError("No sinc coefficients for chains shorter than 3 sites")
            return self.sinc
        return self.ode[1], self.ode[2]


def hubbard_coefficients(
    params: HubbardParams, cfg: Optional[OdeSolverConfig] = None
) -> HubbardCoefficients:
    ode = downfold_coefficients(generator_super_moments(params), cfg)
    sinc = sinc_coefficients(params) if params.n_sites >= 3 else None
    return HubbardCoefficients(ode, sinc)


def energy_scale(c1: complex, c2: complex) -> float:
    """i c1 + c2, real for the symmetric spectrum of the generator superoperator."""
    value = 1j * c1 + c2
    if abs(value.imag) > 1e-9 * max(1.0, abs(value)):
        logger.warning("Heisenberg energy scale has imaginary part %.3e", value.imag)
    return float(value.real)


def spin_to_fock(n_sites: int) -> np.ndarray:
    """Fock word for every spin configuration s (bit i set = up at site i)."""
    s = np.arange(2**n_sites, dtype=np.int64)
    words = np.zeros_like(s)
    for i in range(n_sites):
        up = (s >> i) & 1
        words |= np.where(up == 1, 1 << mode(i, UP), 1 << mode(i, DOWN))
    return words


def spin_subspace_basis(basis: FockBasis) -> np.ndarray:
    """Columns selecting the singly-occupied states of `basis`, in spin order."""
    return projector_from_indices(basis.dim, basis.positions(spin_to_fock(basis.n_sites)))


def heisenberg_bond_sum(n_sites: int, bonds: Sequence[Tuple[int, int]]) -> np.ndarray:
    """sum over bonds of (1 - sigma_i . sigma_j) with Pauli matrices on 2^N spin states."""
    dim = 2**n_sites
    s = np.arange(dim)
    out = np.zeros((dim, dim))
    for i, j in bonds:
        anti = ((s >> i) & 1) != ((s >> j) & 1)
        src = s[anti]
        out[src, src] += 2.0
        out[src ^ (1 << i) ^ (1 << j), src] -= 2.0
    return out


def heisenberg_models(
    params: HubbardParams, coefficients: Tuple[complex, complex]
) -> Tuple[HermitianOperator, HermitianOperator]:
    """H_std = -t^2/(2U) sum_<ij>(1 - s.s) and H_var = -(t^2/U)[i c1 + c2] sum_<ij>(1 - s.s).

    <ij> runs over ordered pairs, so each bond enters twice.
    """
    bond_sum = heisenberg_bond_sum(params.n_sites, params.bonds())
    h_std = -(params.hopping**2 / params.interaction) * bond_sum
    return (
        HermitianOperator(h_std),
        HermitianOperator(2.0 * energy_scale(*coefficients) * h_std),
    )


def check_sweep_size(n_sites: int, allow_large: bool = False) -> None:
    if n_sites > MAX_SITES:
        raise ConfigError(f"Hubbard chains above {MAX_SITES} sites are out of reach of dense ED")
    if n_sites > MAX_DEFAULT_SITES and not allow_large:
        raise ConfigError(
            f"{n_sites} sites needs several GB of memory; pass --allow-large to run it"
        )


@dataclass(frozen=True)
class _SpinBlock:
    doublons: np.ndarray
    hopping_unit: np.ndarray
    singly_occupied: np.ndarray


def _half_filled_blocks(params: HubbardParams) -> List[_SpinBlock]:
    terms = hopping_terms(params, -1.0)
    blocks = []
    for n_up in range(params.n_sites + 1):
        block = FockBasis.sector(params.n_sites, n_up, params.n_sites - n_up)
        blocks.append(
            _SpinBlock(
                block.doublons().astype(float),
                hopping_matrix(block, terms),
                block.singly_occupied(),
            )
        )
    return blocks


@dataclass(frozen=True)
class _PointResult:
    e_exact: np.ndarray
    e_std: np.ndarray
    e_var: np.ndarray
    min_weight: float
    n_excluded: int


def _filtered_levels(
    blocks: Sequence[_SpinBlock], interaction: float, hopping: float, n_levels: int
) -> Tuple[np.ndarray, float, float]:
    """The n_levels exact energies with largest singly-occupied weight, sorted."""
    energies, weights = [], []
    for block in blocks:
        h = interaction * np.diag(block.doublons) + hopping * block.hopping_unit
        e, w = scipy.linalg.eigh(h)
        energies.append(e)
        weights.append(np.sum(np.abs(w[block.singly_occupied]) ** 2, axis=0))
    energies, weights = np.concatenate(energies), np.concatenate(weights)
    selected = np.argsort(-weights, kind="stable")[:n_levels]
    norm = float(np.max(np.abs(energies)))
    return np.sort(energies[selected]), float(np.min(weights[selected])), norm


@dataclass
class HubbardSweep:
    levels: SweepResult
    aggregate: SweepResult
    metadata: Dict[str, object] = field(default_factory=dict)


def _relative_error(exact: np.ndarray, approx: np.ndarray) -> np.ndarray:
    return np.abs((exact - approx) / exact)


def _half_means(errors: np.ndarray) -> Tuple[float, float]:
    if len(errors) == 0:
        return math.nan, math.nan
    half = max(1, len(errors) // 2)
    upper = errors[half:]
    return float(np.mean(errors[:half])), float(np.mean(upper)) if len(upper) else math.nan


def hubbard_sweep(
    n_sites: int,
    t_over_u_grid: Sequence[float],
    interaction: float = 1.0,
    boundary: Boundary = Boundary.PERIODIC,
    source: CoefficientSource = CoefficientSource.SINC,
    allow_large: bool = False,
    threads: int = 1,
    progress: bool = False,
    cfg: Optional[OdeSolverConfig] = None,
) -> HubbardSweep:
    """Exact half-filled levels against standard and improved Heisenberg levels.

    Exact levels are chosen by singly-occupied weight, sorted, and paired with
    the sorted spin-model levels; levels with vanishing exact energy are left out.
    Points where the improved first-half mean error is not below the standard
    one are listed under "first_half_crossover" in the metadata.
    """
    check_sweep_size(n_sites, allow_large)
    base = HubbardParams(n_sites, 0.0, interaction, boundary)
    blocks = _half_filled_blocks(base)
    bond_levels = scipy.linalg.eigvalsh(heisenberg_bond_sum(n_sites, base.bonds()))
    n_levels = 2**n_sites

    def run_point(x: float) -> _PointResult:
        params = HubbardParams(n_sites, x * interaction, interaction, boundary)
        c1, c2 = hubbard_coefficients(params, cfg).select(source)
        exact, min_weight, norm = _filtered_levels(blocks, interaction, params.hopping, n_levels)
        e_std = np.sort(-(params.hopping**2 / interaction) * bond_levels)
        e_var = np.sort(2.0 * energy_scale(c1, c2) * e_std)
        keep = np.abs(exact) >= ZERO_LEVEL_TOL * norm
        return _PointResult(
            exact[keep], e_std[keep], e_var[keep], min_weight, int(np.sum(~keep))
        )

    grid = [float(x) for x in t_over_u_grid]
    points = run_indexed(run_point, grid, threads, desc="t/U points", progress=progress)

    level_rows: Dict[str, List[float]] = {
        name: [] for name in ("t_over_u", "level_index", "e_exact", "e_std", "e_var", "err_std", "err_var")
    }
    aggregate: Dict[str, List[float]] = {
        name: []
        for name in (
            "err_std_first_half",
            "err_var_first_half",
            "err_std_upper_half",
            "err_var_upper_half",
            "err_std_ground",
            "err_var_ground",
            "n_levels",
            "min_weight",
            "flagged",
        )
    }
    flagged_points = []
    crossover_points = []
    for x, point in zip(grid, points):
        err_std = _relative_error(point.e_exact, point.e_std)
        err_var = _relative_error(point.e_exact, point.e_var)
        for k in range(len(point.e_exact)):
            level_rows["t_over_u"].append(x)
            level_rows["level_index"].append(k)
            level_rows["e_exact"].append(point.e_exact[k])
            level_rows["e_std"].append(point.e_std[k])
            level_rows["e_var"].append(point.e_var[k])
            level_rows["err_std"].append(err_std[k])
            level_rows["err_var"].append(err_var[k])

        std_first, std_upper = _half_means(err_std)
        var_first, var_upper = _half_means(err_var)
        flagged = x <= FILTER_CHECK_MAX_T_OVER_U and point.min_weight <= FILTER_WEIGHT_THRESHOLD
        if flagged:
            flagged_points.append(x)
            logger.warning(
                "t/U = %.4g: selected state with singly-occupied weight %.3f",
                x,
                point.min_weight,
            )
        if len(err_std) and not var_first < std_first:
            crossover_points.append(x)
        aggregate["err_std_first_half"].append(std_first)
        aggregate["err_var_first_half"].append(var_first)
        aggregate["err_std_upper_half"].append(std_upper)
        aggregate["err_var_upper_half"].append(var_upper)
        aggregate["err_std_ground"].append(float(err_std[0]) if len(err_std) else math.nan)
        aggregate["err_var_ground"].append(float(err_var[0]) if len(err_var) else math.nan)
        aggregate["n_levels"].append(len(point.e_exact))
        aggregate["min_weight"].append(point.min_weight)
        aggregate["flagged"].append(int(flagged))

    if crossover_points:
        logger.info(
            "Improved first-half error not below the standard one at %d point(s), from t/U = %.4g",
            len(crossover_points),
            crossover_points[0],
        )
    metadata = {
        "n_sites": n_sites,
        "interaction": interaction,
        "boundary": str(boundary),
        "source": str(source),
        "flagged": flagged_points,
        "first_half_crossover": crossover_points,
    }
    levels_table = level_rows.pop("t_over_u")
    return HubbardSweep(
        SweepResult("t_over_u", levels_table, {k: np.array(v) for k, v in level_rows.items()}, metadata),
        SweepResult("t_over_u", grid, {k: np.array(v) for k, v in aggregate.items()}, metadata),
        metadata,
    )
