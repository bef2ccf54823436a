import numpy as np
import pytest

from bads import Options, ProblemSpec, validate_spec
from bads.optimizer import OptimizerRun


class CountingObjective:
    """Wraps a function and counts how often it is called."""

    def __init__(self, fn):
        self.fn = fn
        self.calls = 0

    def __call__(self, x):
        self.calls += 1
        return self.fn(x)


def box_problem(fn, x0, lo=-5.0, hi=5.0, **kw):
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    d = x0.size
    return validate_spec(ProblemSpec(fn, d, x0, np.full(d, lo), np.full(d, hi), **kw))


@pytest.fixture
def make_run():
    def _make(fn, x0, options=None, **kw):
        run = OptimizerRun(box_problem(fn, x0, **kw), options or Options())
        run.start()
        return run

    return _make


# -- acceptance bookkeeping ---------------------------------------------------

ACCEPTANCE = {}
BOUNDS_SCAN = {"records": 0, "violations": 0}


@pytest.fixture(autouse=True, scope="session")
def _scan_every_record():
    """Check every evaluation made anywhere in the session against its hard bounds."""
    original = OptimizerRun.evaluate

    def evaluate(self, unit_point, stage):
        rec = original(self, unit_point, stage)
        x = rec.original_point
        BOUNDS_SCAN["records"] += 1
        if np.any(x < self.problem.lower_bounds) or np.any(x > self.problem.upper_bounds):
            BOUNDS_SCAN["violations"] += 1
        return rec

    OptimizerRun.evaluate = evaluate
    yield
    OptimizerRun.evaluate = original


def pytest_collection_modifyitems(items):
    # the bounds criterion summarises every run, so it goes last
    last = [it for it in items if it.name.startswith("test_criterion_9")]
    items[:] = [it for it in items if it not in last] + last


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for key in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")
