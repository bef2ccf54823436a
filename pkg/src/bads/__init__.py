"""Hybrid direct-search / Gaussian-process black-box optimizer."""

from .errors import (
    BadsError,
    BudgetExhausted,
    DimensionMismatch,
    FitFailed,
    InvalidBounds,
    NonPositiveDefinite,
    ObjectiveRaised,
    OutOfBounds,
    StartOutOfBounds,
)
from .optimizer import EvaluationRecord, Incumbent, OptimizationResult, Options, optimize
from .problem import ProblemSpec, ValidatedProblem, from_unit, to_unit, validate_spec

__all__ = [
    "BadsError", "BudgetExhausted", "DimensionMismatch", "FitFailed", "InvalidBounds",
    "NonPositiveDefinite", "ObjectiveRaised", "OutOfBounds", "StartOutOfBounds",
    "EvaluationRecord", "Incumbent", "OptimizationResult", "Options", "optimize",
    "ProblemSpec", "ValidatedProblem", "from_unit", "to_unit", "validate_spec",
    "minimize",
]

__version__ = "0.1.0"


def minimize(fun, x0, lower_bounds=None, upper_bounds=None, plausible_lower=None,
             plausible_upper=None, noisy=False, noise_scale_hint=None, **options):
    """Convenience wrapper: validate the problem and run :func:`optimize`."""
    import numpy as np

    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    spec = ProblemSpec(fun, x0.size, x0, lower_bounds, upper_bounds, plausible_lower,
                       plausible_upper, noisy, noise_scale_hint)
    return optimize(validate_spec(spec), Options(**options))
