"""Problem definition, validation and the unit-box coordinate transform.

All internal optimizer state lives in a normalized "unit" space. Dimensions
with two finite hard bounds map ``[lower, upper]`` onto ``[0, 1]``; any
dimension with at least one infinite hard bound is scaled by its plausible
interval instead, so ``[plausible_lower, plausible_upper]`` maps onto
``[0, 1]`` and the unit coordinate is unrestricted on the infinite side.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DimensionMismatch, InvalidBounds, OutOfBounds, StartOutOfBounds

_START_TOL = 1e-12


@dataclass
class ProblemSpec:
    """User-facing description of an optimization problem.

    Parameters
    ----------
    objective : callable
        Maps a D-vector in original units to a scalar. In noisy mode it may
        instead return a ``(value, noise_sd)`` pair.
    dim : int
        Number of variables.
    x0 : array_like
        Starting point.
    lower_bounds, upper_bounds : array_like, optional
        Hard bounds. ``None`` (or ``+-inf`` entries) mark unbounded dimensions.
    plausible_lower, plausible_upper : array_like, optional
        Finite box where the optimum is expected. Defaults to the hard
        bounds when those are finite.
    noisy : bool
        Whether the objective is stochastic.
    noise_scale_hint : float, optional
        Rough noise standard deviation, used as a floor for the GP noise.
    """

    objective: Callable
    dim: int
    x0: object
    lower_bounds: object = None
    upper_bounds: object = None
    plausible_lower: object = None
    plausible_upper: object = None
    noisy: bool = False
    noise_scale_hint: Optional[float] = None


@dataclass(frozen=True)
class ValidatedProblem:
    """Immutable, checked problem with precomputed transform parameters."""

    objective: Callable
    dim: int
    x0: np.ndarray
    lower_bounds: np.ndarray
    upper_bounds: np.ndarray
    plausible_lower: np.ndarray
    plausible_upper: np.ndarray
    noisy: bool
    noise_scale_hint: Optional[float]
    # derived quantities
    bounded: np.ndarray = field(repr=False)
    offset: np.ndarray = field(repr=False)
    scale: np.ndarray = field(repr=False)
    unit_lower: np.ndarray = field(repr=False)
    unit_upper: np.ndarray = field(repr=False)


def _as_vector(value, dim, name, fill):
    if value is None:
        return np.full(dim, fill, dtype=float)
    arr = np.atleast_1d(np.asarray(value, dtype=float)).ravel()
    if arr.size == 1 and dim > 1:
        arr = np.full(dim, arr[0])
    if arr.size != dim:
        raise DimensionMismatch(f"{name} has length {arr.size}, expected {dim}")
    return arr.copy()


def validate_spec(spec: ProblemSpec) -> ValidatedProblem:
    """Check a :class:`ProblemSpec` and fill in defaults.

    Raises
    ------
    DimensionMismatch
        If any vector does not have ``dim`` entries.
    InvalidBounds
        If bounds are NaN, misordered, degenerate, or if an unbounded
        dimension has no plausible range.
    StartOutOfBounds
        If ``x0`` lies outside the hard bounds by more than 1e-12.
    """
    try:
        dim = int(spec.dim)
    except (TypeError, ValueError) as exc:
        raise DimensionMismatch(f"dim must be an integer, got {spec.dim!r}") from exc
    if dim < 1 or dim != spec.dim:
        raise DimensionMismatch(f"dim must be a positive integer, got {spec.dim!r}")
    if not callable(spec.objective):
        raise TypeError("objective must be callable")

    lb = _as_vector(spec.lower_bounds, dim, "lower_bounds", -np.inf)
    ub = _as_vector(spec.upper_bounds, dim, "upper_bounds", np.inf)
    x0 = _as_vector(spec.x0, dim, "x0", np.nan)

    if np.any(np.isnan(lb)) or np.any(np.isnan(ub)):
        raise InvalidBounds("hard bounds contain NaN")
    if np.any(lb == np.inf) or np.any(ub == -np.inf):
        raise InvalidBounds("lower bound +inf or upper bound -inf")
    if np.any(lb >= ub):
        raise InvalidBounds("lower_bounds must be strictly below upper_bounds")

    bounded = np.isfinite(lb) & np.isfinite(ub)
    if spec.plausible_lower is None or spec.plausible_upper is None:
        if not np.all(bounded):
            raise InvalidBounds("unbounded dimensions require plausible bounds")
    plb = _as_vector(spec.plausible_lower, dim, "plausible_lower", np.nan)
    pub = _as_vector(spec.plausible_upper, dim, "plausible_upper", np.nan)
    plb = np.where(np.isnan(plb), lb, plb)
    pub = np.where(np.isnan(pub), ub, pub)
    if not (np.all(np.isfinite(plb)) and np.all(np.isfinite(pub))):
        raise InvalidBounds("plausible bounds must be finite")
    if np.any(plb >= pub) or np.any(plb < lb) or np.any(pub > ub):
        raise InvalidBounds("require lower <= plausible_lower < plausible_upper <= upper")

    if np.any(np.isnan(x0)):
        raise StartOutOfBounds("x0 contains NaN")
    with np.errstate(over="ignore"):
        span = np.where(bounded, ub - lb, pub - plb)
    if not np.all(np.isfinite(span)):
        raise InvalidBounds("bound range overflows double precision")
    tol = _START_TOL * np.maximum(1.0, span)
    if np.any(x0 < lb - tol) or np.any(x0 > ub + tol):
        raise StartOutOfBounds(f"x0={x0} outside hard bounds")
    x0 = np.clip(x0, lb, ub)

    hint = spec.noise_scale_hint
    if hint is not None:
        hint = float(hint)
        if not np.isfinite(hint) or hint < 0:
            raise ValueError("noise_scale_hint must be a nonnegative finite number")

    offset = np.where(bounded, lb, plb)
    scale = span
    with np.errstate(invalid="ignore"):
        unit_lower = np.where(bounded, 0.0, (lb - offset) / scale)
        unit_upper = np.where(bounded, 1.0, (ub - offset) / scale)

    return ValidatedProblem(
        objective=spec.objective,
        dim=dim,
        x0=x0,
        lower_bounds=lb,
        upper_bounds=ub,
        plausible_lower=plb,
        plausible_upper=pub,
        noisy=bool(spec.noisy),
        noise_scale_hint=hint,
        bounded=bounded,
        offset=offset,
        scale=scale,
        unit_lower=unit_lower,
        unit_upper=unit_upper,
    )


def to_unit(x, problem: ValidatedProblem) -> np.ndarray:
    """Map a point from original coordinates to unit space."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != problem.dim:
        raise DimensionMismatch(f"point has {x.shape[-1]} coordinates, expected {problem.dim}")
    tol = _START_TOL * np.maximum(1.0, problem.scale)
    if np.any(np.isnan(x)) or np.any(x < problem.lower_bounds - tol) or np.any(
        x > problem.upper_bounds + tol
    ):
        raise OutOfBounds(f"{x} lies outside the hard bounds")
    u = (x - problem.offset) / problem.scale
    return np.clip(u, problem.unit_lower, problem.unit_upper)


def from_unit(u, problem: ValidatedProblem) -> np.ndarray:
    """Map a unit-space point back to original coordinates.

    Coordinates are clamped to the unit box on bounded dimensions (and to
    the finite side of half-bounded ones), and the result is clipped to
    the hard bounds so round-off can never produce an infeasible point.
    """
    u = np.clip(np.asarray(u, dtype=float), problem.unit_lower, problem.unit_upper)
    x = problem.offset + u * problem.scale
    return np.clip(x, problem.lower_bounds, problem.upper_bounds)
