"""Variational polynomial approximation of exp(-iHt) and non-perturbative downfolding."""

from .errors import (
    ConfigError,
    NumericalError,
    SchemaError,
    VarpropError,
)
from .spectral_core import HermitianOperator, Method, MomentTable, exact_propagator, moments
from .propagator_approx import (
    OdeSolverConfig,
    PolynomialPropagator,
    closed_form_propagator,
    kpm_propagator,
    residual_action_propagator,
    taylor_propagator,
    variational_coefficients,
    variational_propagator,
)
from .superop_downfold import (
    PerturbationSplit,
    downfold_coefficients,
    effective_hamiltonian,
    solve_generator,
    super_moments,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "HermitianOperator",
    "Method",
    "MomentTable",
    "NumericalError",
    "OdeSolverConfig",
    "PerturbationSplit",
    "PolynomialPropagator",
    "SchemaError",
    "VarpropError",
    "closed_form_propagator",
    "downfold_coefficients",
    "effective_hamiltonian",
    "exact_propagator",
    "kpm_propagator",
    "moments",
    "residual_action_propagator",
    "solve_generator",
    "super_moments",
    "taylor_propagator",
    "variational_coefficients",
    "variational_propagator",
]
