"""Simulation and validation of non-Gaussian translation processes."""

from . import distributions, sde, specfun, translation
from .distributions import (
    PANEL_DISTRIBUTIONS,
    StandardizedDistribution,
    make_asymmetric_laplace,
    make_distribution,
    make_egb2,
    make_gaussian,
    make_student_t,
    parse_distribution,
)
from .errors import (
    AbortedPathError,
    ConfigError,
    ConvergenceError,
    DomainError,
    InfiniteQuantileError,
    InfiniteVarianceError,
    InsufficientDataError,
    NgtransError,
    NonDifferentiableError,
    TailSaturationError,
)
from .sde import CoefficientSpec, Ensemble, Path, Scheme, TimeGrid

__version__ = "0.1.0"
