import math
import warnings

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from mgiou import (
    Cuboid,
    DimensionMismatch,
    Ellipse,
    MgiouConfig,
    ModeShapeMismatch,
    NormalSet,
    NotPlanar,
    Polygon,
    RotatedRect,
    TooFewVertices,
    batch_mgiou,
    convexity_loss,
    mgiou,
    mgiou_plus,
    unique_normals,
    vertices,
)
from mgiou.audit import pearson_near_pairs
from mgiou.oracle import convex_hull

from .conftest import convex_polygons, rects, ref_mgiou, square

REFLEX_QUAD = np.array([[0.0, 0.0], [2.0, 0.0], [1.0, 0.4], [0.0, 2.0]])
# worked by hand: edges 1 and 2 carry penalties 0.8 and 1.2, the other two 0
REFLEX_QUAD_CONVEXITY = 0.5


def rotate_about_origin(shape: RotatedRect, a: float) -> RotatedRect:
    c, s = math.cos(a), math.sin(a)
    return RotatedRect(c * shape.cx - s * shape.cy, s * shape.cx + c * shape.cy, shape.w, shape.h, shape.angle + a)


# ----------------------------------------------------------------------------
# worked examples


def test_identical_squares():
    r = mgiou(square(), square())
    assert (r.loss, r.mgiou) == (0.0, 1.0)


def test_shifted_squares():
    r = mgiou(square(), square(0.5, 0.0))
    assert r.mgiou == pytest.approx(2 / 3, abs=1e-15)
    assert r.loss == pytest.approx(1 / 6, abs=1e-15)
    per = {tuple(np.round(d, 12) + 0.0): v for d, v in r.per_normal}
    assert per[(1.0, 0.0)] == pytest.approx(1 / 3)
    assert per[(0.0, 1.0)] == 1.0


def test_far_apart_squares():
    r = mgiou(square(), square(100.0, 100.0))
    assert r.mgiou == pytest.approx(-99 / 101, abs=1e-15)
    assert r.mgiou == pytest.approx(-0.9802, abs=1e-4)
    assert r.loss == pytest.approx(0.9901, abs=1e-4)


def test_result_invariants():
    r = mgiou(RotatedRect(0.2, 0.1, 2, 1, 0.3), RotatedRect(0, 0, 1.5, 1.2, -0.4))
    assert r.loss == (1.0 - r.mgiou) / 2.0
    assert r.mgiou == pytest.approx(np.mean([v for _, v in r.per_normal]), abs=1e-15)
    assert r.convexity == 0.0 and r.total == r.loss


def test_pinned_normals():
    p, g = square(), square(0.5, 0.0)
    only_x = NormalSet(np.array([[1.0, 0.0]]))
    assert mgiou(p, g, only_x).mgiou == pytest.approx(1 / 3)


def test_batch_matches_single(rng):
    pp = np.column_stack((rng.normal(size=(50, 2)), rng.uniform(0.5, 2, (50, 2)), rng.uniform(-3, 3, 50)))
    pg = np.column_stack((rng.normal(size=(50, 2)), rng.uniform(0.5, 2, (50, 2)), rng.uniform(-3, 3, 50)))
    mg, loss = batch_mgiou("rect", pp, "rect", pg)
    single = [mgiou(RotatedRect(*a), RotatedRect(*b)).mgiou for a, b in zip(pp, pg)]
    np.testing.assert_array_equal(mg, single)
    np.testing.assert_array_equal(loss, (1 - mg) / 2)


def test_cuboids():
    c = Cuboid((0, 0, 0), (1, 2, 3))
    assert mgiou(c, c).loss == 0.0
    shifted = mgiou(c, Cuboid((0.5, 0, 0), (1, 2, 3)))
    assert shifted.mgiou == pytest.approx((1 / 3 + 1 + 1) / 3)


def test_ellipses():
    e = Ellipse((0, 0), (2, 1), 0.3)
    assert mgiou(e, e).loss == 0.0
    # concentric circles of radius 1 and 2: every direction gives 2/4
    assert mgiou(Ellipse((0, 0), (1, 1)), Ellipse((0, 0), (2, 2))).mgiou == pytest.approx(0.5)


def test_ellipse_with_polygon_uses_union_of_normals():
    e, r = Ellipse((0, 0), (1, 1)), RotatedRect(0, 0, 2, 2, 0.3)
    res = mgiou(e, r)
    assert len(res.per_normal) == len(unique_normals(e, r)) == 4


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        mgiou(square(), Cuboid((0, 0, 0), (1, 1, 1)))


@given(rects(), rects())
def test_matches_pure_python_reference(p, g):
    assert mgiou(p, g).mgiou == pytest.approx(ref_mgiou(vertices(p), vertices(g)), abs=1e-9)


@given(convex_polygons(), convex_polygons())
def test_polygon_pairs_match_reference(pv, gv):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        got = mgiou_plus(Polygon(pv), Polygon(gv), MgiouConfig(mode="unstructured"))
    assert got.mgiou == pytest.approx(ref_mgiou(pv, gv), abs=1e-9)


# ----------------------------------------------------------------------------
# metric properties


@given(rects(), rects())
def test_non_negative_and_in_range(p, g):
    r = mgiou(p, g)
    assert -1.0 < r.mgiou <= 1.0
    assert 0.0 <= r.loss < 1.0


@given(rects(), rects())
def test_symmetric(p, g):
    assert abs(mgiou(p, g).loss - mgiou(g, p).loss) <= 1e-12


@given(rects(), st.sampled_from(["swap", "half_turn", "full_turn"]))
def test_identity_for_reparameterised_rects(p, how):
    if how == "swap":
        g = RotatedRect(p.cx, p.cy, p.h, p.w, p.angle + math.pi / 2)
    else:
        g = RotatedRect(p.cx, p.cy, p.w, p.h, p.angle + (math.pi if how == "half_turn" else 2 * math.pi))
    assert mgiou(p, g).loss <= 1e-12


@given(rects(), st.integers(0, 4), st.sampled_from([-1.0, 1.0]))
def test_identity_detects_small_changes(p, field, sign):
    params = p.params()
    params[field] += sign * 1e-6
    assume(params[2] > 0 and params[3] > 0)
    assert mgiou(p, RotatedRect(*params)).loss > 1e-12


@given(rects(), rects(), st.sampled_from([1e-3, 1.0, 1e3]))
def test_scale_invariance(p, g, s):
    sp = RotatedRect(s * p.cx, s * p.cy, s * p.w, s * p.h, p.angle)
    sg = RotatedRect(s * g.cx, s * g.cy, s * g.w, s * g.h, g.angle)
    assert abs(mgiou(sp, sg).loss - mgiou(p, g).loss) <= 1e-10


@given(rects(), rects(), rects())
def test_triangle_inequality_on_fixed_normals(p, q, r):
    shared = NormalSet.union(unique_normals(p, q), unique_normals(q, r))
    lpr = mgiou(p, r, shared).loss
    assert lpr <= mgiou(p, q, shared).loss + mgiou(q, r, shared).loss + 1e-10


@given(rects(), rects(), st.floats(-math.pi, math.pi))
def test_rigid_rotation_invariance(p, g, a):
    rotated = mgiou(rotate_about_origin(p, a), rotate_about_origin(g, a)).loss
    # normals closer than the merge tolerance (about 4.5e-5 rad) collapse onto
    # a representative picked in a frame-dependent way; there the loss can move
    # by the angle between them times a lever arm of span over shortest side
    d = (p.angle - g.angle) % (math.pi / 2)
    gap = min(d, math.pi / 2 - d)
    sides = (p.w, p.h, g.w, g.h)
    arm = (math.hypot(p.cx - g.cx, p.cy - g.cy) + max(sides)) / min(sides)
    slack = gap * arm if gap < 5e-5 else 0.0
    assert rotated == pytest.approx(mgiou(p, g).loss, abs=1e-9 + slack)


def test_correlation_with_exact_iou_small_sample():
    r = pearson_near_pairs(2000, seed=3)[0]
    assert r >= 0.8


# ----------------------------------------------------------------------------
# convexity


def test_convexity_square_is_zero():
    assert convexity_loss(vertices(square())) == 0.0


@given(st.lists(st.tuples(st.floats(-5, 5), st.floats(-5, 5)), min_size=3, max_size=3))
def test_convexity_triangles_are_zero(pts):
    v = np.array(pts)
    (ax, ay), (bx, by) = v[1] - v[0], v[2] - v[0]
    area = ax * by - ay * bx
    assume(abs(area) > 1e-6)
    assert convexity_loss(v) == 0.0
    assert convexity_loss(v[::-1]) == 0.0


def test_convexity_reflex_quad():
    assert convexity_loss(REFLEX_QUAD) == pytest.approx(REFLEX_QUAD_CONVEXITY, abs=1e-15)


@given(convex_polygons(min_vertices=4))
def test_convexity_zero_on_random_hulls(v):
    assert convexity_loss(convex_hull(v)) == 0.0


@given(st.floats(-math.pi, math.pi), st.floats(-20, 20), st.floats(-20, 20))
def test_convexity_rigid_invariance(a, tx, ty):
    c, s = math.cos(a), math.sin(a)
    moved = REFLEX_QUAD @ np.array([[c, s], [-s, c]]) + [tx, ty]
    assert convexity_loss(moved) == pytest.approx(REFLEX_QUAD_CONVEXITY, rel=1e-9)


@pytest.mark.parametrize("s", [1e-3, 0.5, 2.0, 1e3])
def test_convexity_scales_quadratically(s):
    # the edge normal is the unnormalised rotated edge, so each signed value
    # picks up one factor of s from the offset and one from the normal
    assert convexity_loss(s * REFLEX_QUAD) == pytest.approx(s * s * REFLEX_QUAD_CONVEXITY, rel=1e-12)


def test_convexity_input_checks():
    with pytest.raises(TooFewVertices):
        convexity_loss(np.zeros((2, 2)))
    with pytest.raises(NotPlanar):
        convexity_loss(np.zeros((4, 3)))


# ----------------------------------------------------------------------------
# MGIoU+


def pentagon():
    t = math.pi / 2 + 2 * math.pi * np.arange(5) / 5
    return Polygon(np.column_stack((np.cos(t), np.sin(t))))


def test_plus_identical_pentagon():
    r = mgiou_plus(pentagon(), pentagon(), MgiouConfig(lam=1.0, mode="unstructured"))
    assert r.total == 0.0 and r.convexity == 0.0


def test_plus_reflex_quad_against_its_hull():
    p, g = Polygon(REFLEX_QUAD), Polygon(convex_hull(REFLEX_QUAD))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # the hull has fewer vertices than the quad
        plain = mgiou_plus(p, g, MgiouConfig(lam=0.0, mode="unstructured"))
        reg = mgiou_plus(p, g, MgiouConfig(lam=1.0, mode="unstructured"))
    assert plain.total == plain.loss == pytest.approx((1 - ref_mgiou(REFLEX_QUAD, convex_hull(REFLEX_QUAD))) / 2)
    assert reg.total == pytest.approx(plain.loss + REFLEX_QUAD_CONVEXITY, abs=1e-15)
    assert reg.convexity == pytest.approx(REFLEX_QUAD_CONVEXITY)


def test_plus_warns_when_target_has_fewer_vertices():
    with pytest.warns(UserWarning, match="fewer vertices"):
        mgiou_plus(pentagon(), Polygon([[0, 0], [1, 0], [0, 1]]), MgiouConfig(mode="unstructured"))


def test_plus_structured_same_kind_is_plain_mgiou():
    p, g = RotatedRect(0, 0, 2, 1, 0.2), RotatedRect(0.3, 0, 1, 1, 0)
    assert mgiou_plus(p, g, MgiouConfig(lam=5.0)).to_dict() == mgiou(p, g).to_dict()


def test_plus_mixed_polygonal_kinds_route_unstructured():
    r = mgiou_plus(RotatedRect(0, 0, 2, 2), pentagon(), MgiouConfig())
    assert r.convexity == 0.0
    assert r.mgiou == pytest.approx(ref_mgiou(vertices(RotatedRect(0, 0, 2, 2)), pentagon().vertices))


def test_plus_mode_mismatches():
    with pytest.raises(ModeShapeMismatch):
        mgiou_plus(square(), square(), MgiouConfig(mode="unstructured"))
    with pytest.raises(ModeShapeMismatch):
        mgiou_plus(Ellipse((0, 0), (1, 1)), square(), MgiouConfig())


@pytest.mark.parametrize("lam", [-1.0, math.inf, math.nan])
def test_config_rejects_bad_lambda(lam):
    with pytest.raises(ValueError):
        MgiouConfig(lam=lam)
