import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from mgiou import Interval, MGIoUError, giou1d_definition, giou1d_simplified
from mgiou.giou1d import giou1d_definition_array, giou1d_simplified_array, giou1d_vjp

end = st.floats(-10.0, 10.0, allow_nan=False)


@st.composite
def intervals(draw):
    a, b = sorted((draw(end), draw(end)))
    return Interval(a, b)


def test_partial_overlap():
    assert giou1d_simplified(Interval(0, 2), Interval(1, 3)) == pytest.approx(1 / 3, abs=1e-15)
    br = giou1d_definition(Interval(0, 2), Interval(1, 3))
    assert (br.intersection, br.union, br.enclosure) == (1.0, 3.0, 3.0)
    assert br.iou == pytest.approx(1 / 3) and br.giou == pytest.approx(1 / 3)


def test_disjoint():
    assert giou1d_simplified(Interval(0, 1), Interval(2, 3)) == pytest.approx(-1 / 3, abs=1e-15)
    br = giou1d_definition(Interval(0, 1), Interval(2, 3))
    assert (br.intersection, br.union, br.enclosure, br.iou) == (0.0, 2.0, 3.0, 0.0)
    assert br.giou == pytest.approx(-1 / 3)


def test_identical():
    assert giou1d_simplified(Interval(-1.5, 4.0), Interval(-1.5, 4.0)) == 1.0
    assert giou1d_definition(Interval(0, 1), Interval(0, 1)).giou == 1.0


def test_degenerate_enclosure_is_one():
    p = Interval(2.0, 2.0)
    assert giou1d_simplified(p, p) == 1.0
    assert giou1d_definition(p, p).giou == 1.0


def test_distinct_points():
    p, g = Interval(0.0, 0.0), Interval(1.0, 1.0)
    assert giou1d_simplified(p, g) == -1.0
    assert giou1d_definition(p, g).giou == -1.0


def test_point_inside_interval():
    # no special case: the closed form applies as is
    assert giou1d_simplified(Interval(0.5, 0.5), Interval(0.0, 2.0)) == 0.0


@pytest.mark.parametrize("lo,hi", [(1.0, 0.0), (math.nan, 1.0), (0.0, math.inf)])
def test_invalid_interval(lo, hi):
    with pytest.raises(MGIoUError):
        Interval(lo, hi)


@given(intervals(), intervals())
def test_simplified_matches_definition(p, g):
    assert abs(giou1d_simplified(p, g) - giou1d_definition(p, g).giou) <= 1e-12


@given(intervals(), intervals())
def test_symmetry_exact(p, g):
    assert giou1d_simplified(p, g) == giou1d_simplified(g, p)


@given(intervals(), intervals())
def test_range_and_breakdown_order(p, g):
    v = giou1d_simplified(p, g)
    assert -1.0 <= v <= 1.0
    br = giou1d_definition(p, g)
    assert 0.0 <= br.intersection <= br.union + 1e-12 <= br.enclosure + 2e-12
    assert 0.0 <= br.iou <= 1.0


@given(intervals(), intervals())
def test_one_iff_identical(p, g):
    v = giou1d_simplified(p, g)
    if p == g:
        assert v == 1.0
    elif abs(p.lo - g.lo) + abs(p.hi - g.hi) > 1e-12:
        # differences below the rounding of the enclosure are not resolvable
        assert v < 1.0


@given(intervals(), intervals())
def test_nonpositive_iff_no_interior_overlap(p, g):
    overlap = min(p.hi, g.hi) - max(p.lo, g.lo)
    assume(max(p.hi, g.hi) - min(p.lo, g.lo) > 1e-9)
    assert (giou1d_simplified(p, g) <= 0) == (overlap <= 0)


@given(intervals(), intervals(), st.floats(-10, 10), st.floats(1e-3, 1e3))
def test_translation_and_scale_invariance(p, g, t, s):
    # shifted endpoints round to ~1e-15, so keep the enclosure away from 0
    assume(max(p.hi, g.hi) - min(p.lo, g.lo) > 0.5)
    v = giou1d_simplified(p, g)
    assert abs(giou1d_simplified(p.shifted(t), g.shifted(t)) - v) <= 1e-12
    assert abs(giou1d_simplified(p.scaled(s), g.scaled(s)) - v) <= 1e-12


def test_array_forms_match_scalar(rng):
    e = np.sort(rng.uniform(-10, 10, (1000, 2, 2)), axis=-1)
    a, b, c, d = e[:, 0, 0], e[:, 0, 1], e[:, 1, 0], e[:, 1, 1]
    simple = giou1d_simplified_array(a, b, c, d)
    ref = [giou1d_simplified(Interval(*x[0]), Interval(*x[1])) for x in e]
    np.testing.assert_array_equal(simple, ref)
    np.testing.assert_allclose(giou1d_definition_array(a, b, c, d), simple, atol=1e-12)


def test_vjp_matches_finite_differences(rng):
    e = np.sort(rng.uniform(-5, 5, (200, 2, 2)), axis=-1)
    x = np.stack((e[:, 0, 0], e[:, 0, 1], e[:, 1, 0], e[:, 1, 1]))
    grads = giou1d_vjp(*x, np.ones(200))
    h = 1e-6
    for k in range(4):
        xp, xm = x.copy(), x.copy()
        xp[k] += h
        xm[k] -= h
        fd = (giou1d_simplified_array(*xp) - giou1d_simplified_array(*xm)) / (2 * h)
        np.testing.assert_allclose(grads[k], fd, atol=1e-6)
