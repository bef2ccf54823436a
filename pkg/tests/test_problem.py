import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bads import (
    DimensionMismatch,
    InvalidBounds,
    OutOfBounds,
    ProblemSpec,
    StartOutOfBounds,
    from_unit,
    to_unit,
    validate_spec,
)


def zero(x):
    return 0.0


def make(lb, ub, x0, plb=None, pub=None, dim=None):
    dim = dim if dim is not None else len(np.atleast_1d(x0))
    return validate_spec(ProblemSpec(zero, dim, x0, lb, ub, plb, pub))


class TestValidateSpec:
    def test_plausible_defaults_to_hard_bounds(self):
        p = make([0, 0], [1, 1], [0.5, 0.5])
        np.testing.assert_array_equal(p.plausible_lower, [0, 0])
        np.testing.assert_array_equal(p.plausible_upper, [1, 1])

    def test_degenerate_dimension_rejected(self):
        with pytest.raises(InvalidBounds):
            make([0, 0], [0, 1], [0, 0.5])

    def test_unbounded_with_plausible(self):
        p = make(None, None, [0, 0], [-5, -5], [5, 5])
        assert not p.bounded.any()
        np.testing.assert_array_equal(p.unit_lower, [-np.inf, -np.inf])

    def test_unbounded_without_plausible_rejected(self):
        with pytest.raises(InvalidBounds):
            make([-np.inf, 0], [np.inf, 1], [0, 0.5])

    def test_nan_bounds_rejected(self):
        with pytest.raises(InvalidBounds):
            make([np.nan, 0], [1, 1], [0.5, 0.5])

    def test_length_mismatch(self):
        with pytest.raises(DimensionMismatch):
            make([0, 0, 0], [1, 1], [0.5, 0.5])
        with pytest.raises(DimensionMismatch):
            make([0, 0], [1, 1], [0.5, 0.5], dim=3)

    def test_start_outside(self):
        with pytest.raises(StartOutOfBounds):
            make([0, 0], [1, 1], [1.5, 0.5])

    def test_start_clamped_within_tolerance(self):
        p = make([0, 0], [1, 1], [1 + 1e-13, -1e-13])
        np.testing.assert_array_equal(p.x0, [1.0, 0.0])

    def test_plausible_outside_hard_rejected(self):
        with pytest.raises(InvalidBounds):
            make([0, 0], [1, 1], [0.5, 0.5], [-1, 0], [1, 1])

    def test_half_bounded_uses_plausible_scale(self):
        p = make([0.0], [np.inf], [1.0], [0.0], [4.0])
        np.testing.assert_allclose(to_unit([2.0], p), [0.5])
        assert p.unit_lower[0] == 0.0 and p.unit_upper[0] == np.inf
        np.testing.assert_allclose(from_unit([-3.0], p), [0.0])
        np.testing.assert_allclose(from_unit([3.0], p), [12.0])


class TestTransform:
    def test_midpoint(self):
        p = make([0, 0], [10, 10], [5, 5])
        np.testing.assert_allclose(to_unit([5, 5], p), [0.5, 0.5])

    def test_boundary(self):
        p = make([0], [10], [0])
        assert to_unit([0], p)[0] == 0.0

    def test_affine(self):
        p = make([-5, -5], [5, 5], [0, 0])
        np.testing.assert_allclose(to_unit([-1, 2], p), [0.4, 0.7], rtol=1e-12)
        np.testing.assert_allclose(from_unit([0.4, 0.7], p), [-1, 2], rtol=1e-12)

    def test_inverse_and_clamp(self):
        p = make([0, 0], [10, 10], [5, 5])
        np.testing.assert_allclose(from_unit([0.5, 0.5], p), [5, 5])
        p1 = make([0], [10], [5])
        assert from_unit([1.2], p1)[0] == 10.0

    def test_out_of_bounds(self):
        p = make([0, 0], [10, 10], [5, 5])
        with pytest.raises(OutOfBounds):
            to_unit([11, 5], p)

    def test_unbounded_not_clamped(self):
        p = make(None, None, [0, 0], [-5, -5], [5, 5])
        np.testing.assert_allclose(to_unit([15, -15], p), [2.0, -1.0])
        np.testing.assert_allclose(from_unit([2.0, -1.0], p), [15, -15])

    def test_round_trip_random(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            d = int(rng.integers(1, 6))
            lo = rng.uniform(-1e3, 1e3, d)
            hi = lo + 10 ** rng.uniform(-3, 3, d)
            x = rng.uniform(lo, hi)
            p = make(lo, hi, x)
            back = from_unit(to_unit(x, p), p)
            assert np.all(np.abs(back - x) <= 1e-12 * np.maximum(np.abs(x), hi - lo))

    def test_from_unit_never_leaves_bounds(self):
        rng = np.random.default_rng(1)
        lo, hi = np.array([0.1, -3.3]), np.array([0.7, 1.9])
        p = make(lo, hi, (lo + hi) / 2)
        x = np.array([from_unit(u, p) for u in rng.uniform(-0.5, 1.5, (500, 2))])
        assert np.all(x >= lo) and np.all(x <= hi)

    def test_strictly_increasing(self):
        p = make([-2, 3], [7, 4], [0, 3.5])
        xs = np.linspace(-2, 7, 50)
        u = np.array([to_unit([x, 3.5], p)[0] for x in xs])
        assert np.all(np.diff(u) > 0)


finite = st.floats(allow_nan=True, allow_infinity=True, width=64)


@settings(max_examples=300, deadline=None)
@given(
    lb=st.lists(finite, min_size=1, max_size=3),
    ub=st.lists(finite, min_size=1, max_size=3),
    x0=st.lists(finite, min_size=1, max_size=3),
    plb=st.none() | st.lists(finite, min_size=1, max_size=3),
)
def test_validation_is_total(lb, ub, x0, plb):
    pub = None if plb is None else [v + 1.0 for v in plb]
    try:
        p = validate_spec(ProblemSpec(zero, len(x0), x0, lb, ub, plb, pub))
    except (DimensionMismatch, InvalidBounds, StartOutOfBounds):
        return
    assert np.all(p.lower_bounds < p.upper_bounds)
    assert np.all(np.isfinite(p.plausible_lower)) and np.all(np.isfinite(p.plausible_upper))
    assert np.all((p.x0 >= p.lower_bounds) & (p.x0 <= p.upper_bounds))
