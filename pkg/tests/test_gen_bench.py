import math

import numpy as np
import pytest

from mgiou import MGIoUError, Polygon, convexity_loss
from mgiou.bench import MIN_PAIRS, bench_pairs, run_bench
from mgiou.gen import (
    NEAR_DIAGONALS,
    corpus,
    near_rect_pairs,
    overlapping_batch,
    random_hull,
    random_ngon,
    random_trajectory,
    reflect_vertex,
    reflected_hull,
)
from mgiou.oracle import collides, polygon_area


def test_near_pairs_distance(rng):
    p, g = near_rect_pairs(rng, 5000)
    dist = np.hypot(*(p[:, :2] - g[:, :2]).T)
    reach = NEAR_DIAGONALS * np.hypot(g[:, 2], g[:, 3])
    assert np.all(dist <= reach + 1e-12)
    # distance is uniform in [0, reach]
    assert np.mean(dist / reach) == pytest.approx(0.5, abs=0.02)


def test_hulls_are_convex_ccw(rng):
    for _ in range(200):
        h = random_hull(rng, min_vertices=4)
        assert len(h) >= 4 and polygon_area(h.tolist()) > 0
        assert convexity_loss(Polygon(h)) == 0.0


def test_ngons_are_convex(rng):
    for v in random_ngon(rng, 100, 7):
        assert convexity_loss(Polygon(v)) == 0.0


def test_reflection(rng):
    for _ in range(100):
        h, r = reflected_hull(rng)
        assert convexity_loss(Polygon(h)) == 0.0
        assert convexity_loss(Polygon(r)) > 0.0
        assert np.count_nonzero(np.any(h != r, axis=1)) == 1
    # mirroring twice is the identity
    h = random_hull(rng)
    np.testing.assert_allclose(reflect_vertex(reflect_vertex(h, 1), 1), h, atol=1e-12)


def test_overlapping_batches_collide(rng):
    for _ in range(50):
        b = overlapping_batch(rng)
        assert collides(b.boxes[0, 0], b.boxes[0, 1])


def test_trajectory_shapes(rng):
    b = random_trajectory(rng, agents=4, steps=5)
    assert b.boxes.shape == (5, 4, 4, 2) and b.masks.shape == (5, 4)
    assert set(np.unique(b.masks)) <= {0.0, 1.0}


def test_corpus_determinism_and_kinds():
    a = list(corpus("polygon", 4, 3))
    assert a == list(corpus("polygon", 4, 3))
    assert all(len(r["p"]["vertices"]) <= len(r["g"]["vertices"]) for r in a)
    with pytest.raises(MGIoUError):
        list(corpus("circle", 1, 0))


def test_bench_pairs_are_shared():
    kind, pp, pg, pv, gv = bench_pairs("rect", 10)
    assert kind == "rect" and pp.shape == (10, 5) and pv.shape == (10, 4, 2)
    kind, pp, pg, pv, gv = bench_pairs("polygon", 10)
    np.testing.assert_array_equal(pp.reshape(pv.shape), pv)
    with pytest.raises(ValueError):
        bench_pairs("cuboid", 10)


def test_run_bench_small():
    with pytest.warns(UserWarning):
        res = run_bench(pairs=50, repeat=1)
    assert [r.method for r in res.rows] == ["mgiou_batched", "exact_giou_oracle", "mgiou_per_pair"]
    assert res.speedup > 0 and math.isfinite(res.speedup)
    assert res.to_csv().splitlines()[-1].startswith("speedup,50,")
    assert MIN_PAIRS == 1000
    with pytest.raises(ValueError):
        run_bench(pairs=0)
