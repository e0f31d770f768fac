"""Multilevel and multi-index (quasi-)Monte Carlo for elliptic PDEs with
uniformly distributed random coefficients."""

from .errors import ConfigurationError, DomainError, EstimatorFailure, SolverError
from .grid import SolverConfig, functional_batch, solve, solve_batch
from .model import ProblemSpec, coefficient_eval, make_problem, validate_ellipticity

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError", "DomainError", "EstimatorFailure", "ProblemSpec", "SolverConfig",
    "SolverError", "coefficient_eval", "functional_batch", "make_problem", "solve",
    "solve_batch", "validate_ellipticity",
]
