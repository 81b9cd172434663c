"""MGIoU-: pairwise overlap penalty across trajectory boxes.

For every timestep and every *ordered* pair of agents ``(i, j)``, ``i != j``,
the pair penalty ``K = softplus(min_k GIoU1D_k)`` over the pair's merged
normals is added to agent ``i``'s per-step loss. Agent losses are the
mask-weighted sums over time and the total is their score-weighted sum. Since
both ``(i, j)`` and ``(j, i)`` are visited, the total is twice a triangular
sum over unordered pairs when masks and scores are uniform.

Only agent ``i``'s mask gates ``K_ij``; the mask of ``j`` is not consulted.
Scores enter as given.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import EmptyBatch, InvalidShape, ShapeMismatch
from .losses import PairGraph, convexity_eval
from .oracle import collides

CONVEXITY_TOL = 1e-9


def softplus(x):
    return np.logaddexp(0.0, x)


@dataclass(frozen=True, eq=False)
class TrajectoryBatch:
    """``boxes`` is ``(T, B, 4, 2)``, ``masks`` ``(T, B)`` in {0, 1}, ``scores`` ``(B,)``."""

    boxes: np.ndarray
    masks: np.ndarray
    scores: np.ndarray

    def __post_init__(self):
        boxes = np.array(self.boxes, dtype=float)
        masks = np.array(self.masks, dtype=float)
        scores = np.array(self.scores, dtype=float)
        if boxes.ndim != 4 or boxes.shape[2:] != (4, 2):
            raise ShapeMismatch(f"boxes must be (T, B, 4, 2), got {boxes.shape}")
        t, b = boxes.shape[:2]
        if t == 0 or b == 0:
            raise EmptyBatch("trajectory batch has no timesteps or no agents")
        if masks.shape != (t, b):
            raise ShapeMismatch(f"masks must be {(t, b)}, got {masks.shape}")
        if scores.shape != (b,):
            raise ShapeMismatch(f"scores must be ({b},), got {scores.shape}")
        if not np.all(np.isin(masks, (0.0, 1.0))):
            raise InvalidShape("masks must be 0 or 1")
        if not (np.all(np.isfinite(scores)) and np.all(np.isfinite(boxes))):
            raise InvalidShape("boxes and scores must be finite")
        conv, _ = convexity_eval(boxes.reshape(-1, 4, 2))
        if np.any(conv > CONVEXITY_TOL):
            raise InvalidShape("every box must be a convex quadrilateral")
        for arr in (boxes, masks, scores):
            arr.setflags(write=False)
        object.__setattr__(self, "boxes", boxes)
        object.__setattr__(self, "masks", masks)
        object.__setattr__(self, "scores", scores)

    @property
    def n_steps(self) -> int:
        return self.boxes.shape[0]

    @property
    def n_agents(self) -> int:
        return self.boxes.shape[1]

    def with_boxes(self, boxes) -> "TrajectoryBatch":
        return TrajectoryBatch(boxes, self.masks, self.scores)

    @classmethod
    def from_dict(cls, d: dict) -> "TrajectoryBatch":
        try:
            agents = d["agents"]
            boxes = np.array([a["boxes"] for a in agents], dtype=float)
            if boxes.ndim != 4:
                raise ShapeMismatch(f"agent boxes must be T x 4 x 2, got shape {boxes.shape[1:]}")
            masks = np.array([a.get("mask", [1] * boxes.shape[1]) for a in agents], dtype=float)
            scores = np.array([a.get("score", 1.0) for a in agents], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ShapeMismatch):
                raise
            raise InvalidShape(f"malformed trajectory record: {exc}") from exc
        return cls(boxes.transpose(1, 0, 2, 3), masks.T, scores)

    def to_dict(self) -> dict:
        return {
            "agents": [
                {
                    "boxes": self.boxes[:, i].tolist(),
                    "mask": [int(m) for m in self.masks[:, i]],
                    "score": float(self.scores[i]),
                }
                for i in range(self.n_agents)
            ]
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


@dataclass(frozen=True)
class OverlapReport:
    total: float
    per_agent: np.ndarray  # L_i, (B,)
    pair_penalty: np.ndarray  # K[t, i, j], (T, B, B), zero diagonal
    collisions: int

    def to_dict(self) -> dict:
        return {"total": self.total, "per_agent": self.per_agent.tolist(), "collisions": self.collisions}


def pair_penalty_eval(box_i, box_j, grad=False):
    """Batched pair penalty for boxes ``(M, 4, 2)``.

    Returns ``(K, min_giou, grads)`` with ``grads = (dK/dbox_i, dK/dbox_j)``
    when requested.
    """
    box_i = np.asarray(box_i, dtype=float)
    box_j = np.asarray(box_j, dtype=float)
    m = box_i.shape[0]
    graph = PairGraph("polygon", box_i.reshape(m, -1), "polygon", box_j.reshape(m, -1))
    masked = np.where(graph.valid, graph.giou, np.inf)
    k_min = np.argmin(masked, axis=1)
    g_min = masked[np.arange(m), k_min]
    k = softplus(g_min)
    grads = None
    if grad:
        g_giou = np.zeros_like(graph.giou)
        g_giou[np.arange(m), k_min] = expit(g_min)
        gi, gj = graph.backward(g_giou)
        grads = (gi.reshape(box_i.shape), gj.reshape(box_j.shape))
    return k, g_min, grads


def pair_penalty(box_i, box_j) -> float:
    """``softplus`` of the smallest 1D GIoU over the pair's merged normals."""
    bi = np.asarray(box_i, dtype=float)
    bj = np.asarray(box_j, dtype=float)
    if bi.shape != (4, 2) or bj.shape != (4, 2):
        raise ShapeMismatch(f"boxes must be (4, 2), got {bi.shape} and {bj.shape}")
    k, _, _ = pair_penalty_eval(bi[None], bj[None])
    return float(k[0])


def _ordered_pairs(t: int, b: int):
    ii, jj = np.nonzero(~np.eye(b, dtype=bool))
    tt = np.repeat(np.arange(t), len(ii))
    return tt, np.tile(ii, t), np.tile(jj, t)


def mgiou_minus_eval(boxes, masks, scores, grad=False):
    """Total MGIoU- and per-pair penalties for raw arrays; optional ``d total / d boxes``."""
    t, b = boxes.shape[:2]
    if b < 2:
        raise EmptyBatch("MGIoU- needs at least two agents")
    tt, ii, jj = _ordered_pairs(t, b)
    k, _, grads = pair_penalty_eval(boxes[tt, ii], boxes[tt, jj], grad=grad)
    pen = np.zeros((t, b, b))
    pen[tt, ii, jj] = k
    step_loss = pen.sum(axis=2)
    per_agent = (masks * step_loss).sum(axis=0)
    total = float((scores * per_agent).sum())
    g_boxes = None
    if grad:
        w = (scores[None, :] * masks)[tt, ii]
        g_boxes = np.zeros_like(boxes)
        np.add.at(g_boxes, (tt, ii), w[:, None, None] * grads[0])
        np.add.at(g_boxes, (tt, jj), w[:, None, None] * grads[1])
    return total, per_agent, pen, g_boxes


def count_collisions(boxes, masks) -> int:
    """Unordered agent pairs per timestep, both masked in, with overlap area > 1e-12."""
    t, b = boxes.shape[:2]
    n = 0
    for s in range(t):
        for i in range(b):
            if not masks[s, i]:
                continue
            for j in range(i + 1, b):
                if masks[s, j] and collides(boxes[s, i], boxes[s, j]):
                    n += 1
    return n


def mgiou_minus(batch: TrajectoryBatch) -> OverlapReport:
    total, per_agent, pen, _ = mgiou_minus_eval(batch.boxes, batch.masks, batch.scores)
    return OverlapReport(total, per_agent, pen, count_collisions(batch.boxes, batch.masks))
