import math

import numpy as np
import pytest

from mgiou import EmptyBatch, InvalidShape, ShapeMismatch, TrajectoryBatch, mgiou_minus, pair_penalty
from mgiou.gen import near_rect_pairs, random_trajectory
from mgiou.grad import loss_with_grad
from mgiou.kernels import rect_corners
from mgiou.oracle import collides
from mgiou.overlap import pair_penalty_eval, softplus

from .conftest import square_vertices


def two_agent_batch(bi, bj, masks=(1, 1), scores=(1.0, 1.0)):
    return TrajectoryBatch(np.stack([bi, bj])[None], np.array([masks], dtype=float), np.array(scores))


# ----------------------------------------------------------------------------
# pair penalty


def test_identical_squares():
    sq = square_vertices()
    assert pair_penalty(sq, sq) == pytest.approx(math.log1p(math.e), abs=1e-15)
    assert pair_penalty(sq, sq) == pytest.approx(1.3133, abs=1e-4)


def test_edge_touching_squares():
    assert pair_penalty(square_vertices(), square_vertices(1.0, 0.0)) == pytest.approx(math.log(2), abs=1e-15)


def test_far_shift():
    # x-axis GIoU is (1 - 100) / 101; softplus of it is 0.318629...
    k = pair_penalty(square_vertices(), square_vertices(100.0, 0.0))
    assert k == pytest.approx(math.log1p(math.exp(-99 / 101)), abs=1e-15)
    assert k == pytest.approx(0.3186, abs=1e-4)


def test_separated_below_ln2():
    assert pair_penalty(square_vertices(), square_vertices(1.5, 0.2)) < math.log(2)


def test_pair_penalty_shape_checks():
    with pytest.raises(ShapeMismatch):
        pair_penalty(np.zeros((3, 2)), square_vertices())


def random_box_pairs(rng, n):
    p, g = near_rect_pairs(rng, n)
    return rect_corners(p), rect_corners(g)


def test_pair_symmetry(rng):
    bi, bj = random_box_pairs(rng, 2000)
    kij = pair_penalty_eval(bi, bj)[0]
    kji = pair_penalty_eval(bj, bi)[0]
    np.testing.assert_allclose(kij, kji, rtol=0, atol=1e-12)
    assert np.all(kij > 0)


def test_monotone_separation(rng):
    bi, bj = random_box_pairs(rng, 1000)
    ci, cj = bi.mean(axis=1), bj.mean(axis=1)
    d = cj - ci
    d /= np.maximum(np.linalg.norm(d, axis=1, keepdims=True), 1e-12)
    prev = pair_penalty_eval(bi, bj)[0]
    for step in range(1, 11):
        k = pair_penalty_eval(bi, bj + 0.3 * step * d[:, None, :])[0]
        assert np.all(k <= prev + 1e-12)
        prev = k


def test_separating_axis_consistency(rng):
    bi, bj = random_box_pairs(rng, 3000)
    _, g_min, _ = pair_penalty_eval(bi, bj)
    disjoint = np.array([not collides(a, b) for a, b in zip(bi, bj)])
    assert disjoint.sum() > 100
    assert np.all(g_min[disjoint] <= 0)


def test_gradient_flows_for_disjoint_boxes():
    lv = loss_with_grad("mgiou_minus_pair", square_vertices(), square_vertices(3.0, 0.0))
    g = lv.gradient.reshape(2, 4, 2)
    assert np.all(np.isfinite(g)) and np.abs(g).max() > 0
    # descending moves box i left and box j right: they separate further
    assert g[0, :, 0].sum() > 0 and g[1, :, 0].sum() < 0


# ----------------------------------------------------------------------------
# batch loss


def test_two_far_boxes_total_is_twice_pair():
    bi, bj = square_vertices(), square_vertices(100.0, 100.0)
    rep = mgiou_minus(two_agent_batch(bi, bj))
    k = pair_penalty(bi, bj)
    assert rep.total == pytest.approx(2 * k, abs=1e-15)
    assert rep.collisions == 0
    assert 0 < rep.total < 2 * math.log(2)


def test_all_masks_zero():
    b = two_agent_batch(square_vertices(), square_vertices(0.3, 0.0), masks=(0, 0))
    assert mgiou_minus(b).total == 0.0


def test_all_scores_zero():
    b = two_agent_batch(square_vertices(), square_vertices(0.3, 0.0), scores=(0.0, 0.0))
    assert mgiou_minus(b).total == 0.0


def test_only_agent_i_mask_gates_its_row():
    bi, bj = square_vertices(), square_vertices(0.3, 0.0)
    rep = mgiou_minus(two_agent_batch(bi, bj, masks=(1, 0)))
    k = pair_penalty(bi, bj)
    np.testing.assert_allclose(rep.per_agent, [k, 0.0])
    assert rep.total == pytest.approx(k)


def test_report_invariants(rng):
    batch = random_trajectory(rng, agents=4, steps=6)
    rep = mgiou_minus(batch)
    pen = rep.pair_penalty
    assert pen.shape == (6, 4, 4)
    assert np.all(np.diagonal(pen, axis1=1, axis2=2) == 0)
    off = ~np.eye(4, dtype=bool)
    assert np.all(pen[:, off] > 0)
    np.testing.assert_allclose(rep.per_agent, (batch.masks * pen.sum(axis=2)).sum(axis=0), atol=1e-12)
    assert rep.total == pytest.approx(float(batch.scores @ rep.per_agent), abs=1e-12)


def test_collision_count():
    b = np.stack([square_vertices(), square_vertices(0.5, 0), square_vertices(5, 5)])
    batch = TrajectoryBatch(np.stack([b, b]), np.array([[1, 1, 1], [1, 0, 1]]), np.ones(3))
    # one overlapping pair at t=0; at t=1 one of its agents is masked out
    assert mgiou_minus(batch).collisions == 1


def test_batch_validation():
    sq = square_vertices()
    with pytest.raises(ShapeMismatch):
        TrajectoryBatch(np.zeros((1, 2, 3, 2)), np.ones((1, 2)), np.ones(2))
    with pytest.raises(ShapeMismatch):
        TrajectoryBatch(np.stack([sq, sq])[None], np.ones((2, 2)), np.ones(2))
    with pytest.raises(InvalidShape):
        TrajectoryBatch(np.stack([sq, sq])[None], np.full((1, 2), 0.5), np.ones(2))
    with pytest.raises(InvalidShape):
        TrajectoryBatch(np.stack([sq, sq])[None], np.ones((1, 2)), np.array([1.0, math.nan]))
    bowtie = np.array([[0, 0], [1, 1], [1, 0], [0, 1]], dtype=float)
    with pytest.raises(InvalidShape):
        TrajectoryBatch(np.stack([sq, bowtie])[None], np.ones((1, 2)), np.ones(2))
    with pytest.raises(EmptyBatch):
        TrajectoryBatch(np.zeros((0, 2, 4, 2)), np.ones((0, 2)), np.ones(2))
    with pytest.raises(EmptyBatch):
        mgiou_minus(TrajectoryBatch(sq[None, None], np.ones((1, 1)), np.ones(1)))


def test_json_round_trip(rng):
    batch = random_trajectory(rng, agents=3, steps=4)
    again = TrajectoryBatch.from_dict(batch.to_dict())
    np.testing.assert_array_equal(again.boxes, batch.boxes)
    np.testing.assert_array_equal(again.masks, batch.masks)
    np.testing.assert_array_equal(again.scores, batch.scores)


def test_json_mask_and_score_defaults():
    d = {"agents": [{"boxes": [square_vertices().tolist()]}, {"boxes": [square_vertices(3, 0).tolist()]}]}
    batch = TrajectoryBatch.from_dict(d)
    assert batch.masks.tolist() == [[1.0, 1.0]] and batch.scores.tolist() == [1.0, 1.0]


def test_malformed_json_batch():
    with pytest.raises(InvalidShape):
        TrajectoryBatch.from_dict({"agents": [{"box": []}]})


def test_softplus_is_stable():
    assert softplus(np.array([-800.0, 0.0, 800.0])).tolist() == [0.0, math.log(2), 800.0]
