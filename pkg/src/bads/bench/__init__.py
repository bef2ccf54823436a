"""Benchmark problems and the ``bads-bench`` command-line harness."""

from .functions import (
    PROBLEM_NAMES,
    TestProblem,
    ellipsoid,
    flipper,
    make_objective,
    make_problem,
    noisy_sphere,
    rosenbrock,
    sphere,
)
