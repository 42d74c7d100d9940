"""Numerical experiments on moving anisotropies: discrete X-gradients, mollification,
Dirichlet solves and Rayleigh quotients for families X^h converging to X."""

__version__ = "0.1.0"

from .errors import (
    ConfigurationError,
    ContractError,
    DataError,
    DomainError,
    GammalabError,
    IterationError,
    ResolutionError,
)
from .grid import Grid, ScalarField, VecField, gradient, inner, lp_norm, x_gradient
from .anisotropy import CoefficientField, MovingFamily, builtin_family, classify, pseudoinverse, sigma
from .mollify import Mollifier, bump_kernel, commutator_norm, convolve, meyers_serrin_step
from .functionals import Perturbation, QuadraticIntegrand, evaluate, momentum
from .solve import DirichletProblem, minimize_total, rayleigh_quotient, solve_dirichlet

__all__ = [
    "__version__",
    "GammalabError", "DomainError", "ConfigurationError", "ContractError", "ResolutionError",
    "IterationError", "DataError",
    "Grid", "ScalarField", "VecField", "gradient", "x_gradient", "inner", "lp_norm",
    "CoefficientField", "MovingFamily", "builtin_family", "classify", "pseudoinverse", "sigma",
    "Mollifier", "bump_kernel", "convolve", "meyers_serrin_step", "commutator_norm",
    "QuadraticIntegrand", "Perturbation", "evaluate", "momentum",
    "DirichletProblem", "solve_dirichlet", "minimize_total", "rayleigh_quotient",
]
