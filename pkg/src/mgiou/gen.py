"""Seeded random shapes, pairs and trajectory batches.

Every sampler takes a ``numpy.random.Generator`` so callers control
reproducibility. Sizes are drawn from ``SIZE_RANGE`` and angles uniformly
from ``[-pi, pi)``.

"Near" pairs place the second centre at a distance drawn uniformly from
``[0, 2 * diagonal]`` of the first shape, in a uniform direction.
"""

from __future__ import annotations

import math

import numpy as np

from . import oracle
from .errors import MGIoUError
from .kernels import rect_corners
from .overlap import TrajectoryBatch
from .shapes import Polygon, RotatedRect

SIZE_RANGE = (0.5, 2.0)
CENTER_RANGE = 5.0
NEAR_DIAGONALS = 2.0
HULL_POINTS = 12


def rect_params(rng: np.random.Generator, n: int, center_range: float = CENTER_RANGE) -> np.ndarray:
    """``(n, 5)`` rect parameters: uniform centres, sizes and angles."""
    c = rng.uniform(-center_range, center_range, (n, 2))
    s = rng.uniform(*SIZE_RANGE, (n, 2))
    a = rng.uniform(-math.pi, math.pi, n)
    return np.column_stack((c, s, a))


def near_offsets(rng: np.random.Generator, diag: np.ndarray, diagonals: float = NEAR_DIAGONALS) -> np.ndarray:
    r = diagonals * diag * rng.uniform(size=len(diag))
    t = rng.uniform(0.0, 2 * math.pi, len(diag))
    return np.column_stack((r * np.cos(t), r * np.sin(t)))


def near_rect_pairs(rng: np.random.Generator, n: int, diagonals: float = NEAR_DIAGONALS):
    """``(p, g)`` parameter arrays with each ``p`` centred within ``diagonals``
    diagonals of its ``g``; ``g`` sits at the origin."""
    g = rect_params(rng, n, 0.0)
    p = rect_params(rng, n, 0.0)
    p[:, :2] = near_offsets(rng, np.hypot(g[:, 2], g[:, 3]), diagonals)
    return p, g


def random_hull(rng: np.random.Generator, n_points: int = HULL_POINTS, min_vertices: int = 3, scale: float = 1.0) -> np.ndarray:
    """Convex hull (CCW) of uniform points in ``[-scale, scale]^2``."""
    while True:
        h = oracle.convex_hull(rng.uniform(-scale, scale, (n_points, 2)))
        if len(h) >= min_vertices:
            return h


def random_ngon(rng: np.random.Generator, n: int, k: int, center_range: float = 1.0) -> np.ndarray:
    """``(n, k, 2)`` convex CCW polygons with vertices on a circle at sorted angles.

    Angles are spaced with a random jitter so no two vertices coincide.
    """
    base = np.arange(k) / k
    t = 2 * math.pi * (base[None] + rng.uniform(0.0, 0.8 / k, (n, k)) + rng.uniform(size=(n, 1)))
    r = rng.uniform(*SIZE_RANGE, (n, 1)) / 2
    c = rng.uniform(-center_range, center_range, (n, 1, 2))
    return c + r[..., None] * np.stack((np.cos(t), np.sin(t)), axis=-1)


def reflect_vertex(v: np.ndarray, k: int) -> np.ndarray:
    """Mirror vertex ``k`` across the line through its two neighbours."""
    a, b = v[k - 1], v[(k + 1) % len(v)]
    d = (b - a) / np.linalg.norm(b - a)
    p = v[k] - a
    out = v.copy()
    out[k] = a + 2 * np.dot(p, d) * d - p
    return out


def reflected_hull(rng: np.random.Generator, n_points: int = HULL_POINTS):
    """A random hull with at least 4 vertices and a copy with one vertex
    reflected inward.

    The vertex is drawn at random. The mirrored vertex must land strictly
    inside the convex polygon of the remaining vertices, so the result is a
    simple loop with exactly one reflex angle; otherwise the following
    vertices are tried in turn.
    """
    while True:
        h = random_hull(rng, n_points, min_vertices=4)
        k0 = int(rng.integers(len(h)))
        for step in range(len(h)):
            k = (k0 + step) % len(h)
            r = reflect_vertex(h, k)
            if not _strictly_inside(r[k], np.delete(h, k, axis=0)):
                continue
            try:
                Polygon(r)
            except MGIoUError:
                continue
            return h, r


def _strictly_inside(pt: np.ndarray, ccw: np.ndarray, margin: float = 1e-9) -> bool:
    e = np.roll(ccw, -1, axis=0) - ccw
    rel = pt - ccw
    return bool(np.all(e[:, 0] * rel[:, 1] - e[:, 1] * rel[:, 0] > margin))


def overlapping_box_pair(rng: np.random.Generator, max_gap: float = 0.9) -> np.ndarray:
    """Two rotated rects with positive overlap area, ``(2, 4, 2)``.

    The centre distance is uniform in ``[0, max_gap]`` times the sum of the
    two circumradii; draws without overlap are rejected.
    """
    while True:
        s = rng.uniform(*SIZE_RANGE, (2, 2))
        a = rng.uniform(-math.pi, math.pi, 2)
        reach = 0.5 * np.hypot(s[:, 0], s[:, 1]).sum()
        r = rng.uniform(0.0, max_gap) * reach
        t = rng.uniform(0.0, 2 * math.pi)
        c = np.array([[0.0, 0.0], [r * math.cos(t), r * math.sin(t)]])
        boxes = rect_corners(np.column_stack((c, s, a)))
        if oracle.collides(boxes[0], boxes[1]):
            return boxes


def overlapping_batch(rng: np.random.Generator, steps: int = 1) -> TrajectoryBatch:
    """Two agents whose boxes overlap at every timestep; masks and scores 1."""
    boxes = np.stack([overlapping_box_pair(rng) for _ in range(steps)])
    return TrajectoryBatch(boxes, np.ones((steps, 2)), np.ones(2))


def random_trajectory(rng: np.random.Generator, agents: int = 3, steps: int = 8, dropout: float = 0.1) -> TrajectoryBatch:
    """Boxes moving in straight lines with jitter on position and heading."""
    start = rng.uniform(-CENTER_RANGE, CENTER_RANGE, (agents, 2))
    heading = rng.uniform(-math.pi, math.pi, agents)
    speed = rng.uniform(0.0, 1.0, agents)
    vel = speed[:, None] * np.column_stack((np.cos(heading), np.sin(heading)))
    size = rng.uniform(*SIZE_RANGE, (agents, 2))
    t = np.arange(steps)[:, None, None]
    centres = start[None] + t * vel[None] + rng.normal(0.0, 0.05, (steps, agents, 2))
    angles = heading[None] + rng.normal(0.0, 0.02, (steps, agents))
    params = np.concatenate(
        (centres, np.broadcast_to(size, (steps, agents, 2)), angles[..., None]), axis=-1
    ).reshape(-1, 5)
    boxes = rect_corners(params).reshape(steps, agents, 4, 2)
    masks = (rng.uniform(size=(steps, agents)) >= dropout).astype(float)
    scores = rng.uniform(0.0, 1.0, agents)
    return TrajectoryBatch(boxes, masks, scores)


# ----------------------------------------------------------------------------
# JSONL corpora

KINDS = ("rect", "polygon", "traj")


def _rect(p) -> RotatedRect:
    return RotatedRect(*(float(v) for v in p))


def corpus(kind: str, count: int, seed: int):
    """Yield ``count`` JSON-ready records; pairs for ``rect``/``polygon``,
    trajectory batches for ``traj``."""
    if kind not in KINDS:
        raise MGIoUError(f"unknown corpus kind {kind!r}; expected one of {KINDS}")
    rng = np.random.default_rng(seed)
    for _ in range(count):
        if kind == "rect":
            p, g = near_rect_pairs(rng, 1)
            g[:, :2] = rng.uniform(-CENTER_RANGE, CENTER_RANGE, (1, 2))
            p[:, :2] += g[:, :2]
            yield {"p": _rect(p[0]).to_dict(), "g": _rect(g[0]).to_dict()}
        elif kind == "polygon":
            centre = rng.uniform(-CENTER_RANGE, CENTER_RANGE, 2)
            g = random_hull(rng) + centre
            # the prediction never has more vertices than the target
            p = random_hull(rng)
            while len(p) > len(g):
                p = random_hull(rng)
            p = p + centre + rng.normal(0.0, 0.5, 2)
            yield {"p": Polygon(p).to_dict(), "g": Polygon(g).to_dict(), "mode": "unstructured"}
        else:
            yield random_trajectory(rng, agents=int(rng.integers(2, 5))).to_dict()


__all__ = [
    "KINDS",
    "corpus",
    "near_rect_pairs",
    "overlapping_batch",
    "overlapping_box_pair",
    "random_hull",
    "random_ngon",
    "random_trajectory",
    "rect_params",
    "reflect_vertex",
    "reflected_hull",
]
