"""Closed-form test objectives and the named benchmark problems."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np


def rosenbrock(x):
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        raise ValueError("rosenbrock needs at least two dimensions")
    return float(np.sum(100.0 * (x[1:] - x[:-1] ** 2) ** 2 + (1.0 - x[:-1]) ** 2))


def sphere(x):
    x = np.asarray(x, dtype=float)
    return float(np.sum(x * x))


def ellipsoid(x):
    """Axis-aligned ellipsoid with condition number 1e6."""
    x = np.asarray(x, dtype=float)
    d = x.size
    if d == 1:
        return float(x[0] ** 2)
    weights = 10.0 ** (6.0 * np.arange(d) / (d - 1))
    return float(np.sum(weights * x * x))


def noisy_sphere(x, rng, sigma=1.0):
    """Sphere plus additive Gaussian noise; returns ``(value, sigma)``."""
    return sphere(x) + sigma * rng.standard_normal(), sigma


def flipper(x, amplitude=1.0, frequency=200.0):
    """Sphere plus a high-frequency square wave no smooth surrogate can follow."""
    x = np.asarray(x, dtype=float)
    return sphere(x) + amplitude * float(np.sign(np.sin(frequency * np.sum(x))))


@dataclass(frozen=True)
class TestProblem:
    name: str
    dim: int
    definition: Callable
    lower: np.ndarray
    upper: np.ndarray
    x0: np.ndarray
    optimum_x: Optional[np.ndarray] = None
    optimum_f: Optional[float] = None
    noise_sd: Optional[float] = None


def _alternate(a, b, dim):
    return np.array([a if i % 2 == 0 else b for i in range(dim)], dtype=float)


def make_problem(name: str, dim: int = 2, noise_sd: float | None = None) -> TestProblem:
    """Build a named benchmark problem on the box ``[-5, 5]**dim``.

    Start points: ``(-1, 2, -1, 2, ...)`` for Rosenbrock, ``(3, 4, 3, 4, ...)``
    otherwise. ``noisy_sphere`` defaults to ``noise_sd=1``.
    """
    lower, upper = np.full(dim, -5.0), np.full(dim, 5.0)
    if name == "rosenbrock":
        if dim < 2:
            raise ValueError("rosenbrock needs dim >= 2")
        return TestProblem(name, dim, rosenbrock, lower, upper, _alternate(-1.0, 2.0, dim),
                           np.ones(dim), 0.0, noise_sd)
    if name in ("sphere", "ellipsoid", "flipper", "noisy_sphere"):
        fn = {"sphere": sphere, "ellipsoid": ellipsoid, "flipper": flipper, "noisy_sphere": sphere}[name]
        if name == "noisy_sphere" and noise_sd is None:
            noise_sd = 1.0
        # the flipper's minimum has no closed form
        known = name != "flipper"
        return TestProblem(name, dim, fn, lower, upper, _alternate(3.0, 4.0, dim),
                           np.zeros(dim) if known else None, 0.0 if known else None, noise_sd)
    raise ValueError(f"unknown problem {name!r}; choose from {', '.join(PROBLEM_NAMES)}")


PROBLEM_NAMES = ("rosenbrock", "sphere", "ellipsoid", "noisy_sphere", "flipper")


def make_objective(problem: TestProblem, rng: np.random.Generator | None = None):
    """Objective callable; noisy problems return ``(value, sd)`` using ``rng``."""
    if not problem.noise_sd:
        return problem.definition
    if rng is None:
        raise ValueError("noisy problems need a random generator")
    sigma = float(problem.noise_sd)

    def objective(x):
        return problem.definition(x) + sigma * rng.standard_normal(), sigma

    return objective
