"""Exact reference geometry: convex clipping, polygon IoU/GIoU, collision
tests and a Monte-Carlo IoU for oriented cuboids.

Nothing here is differentiable; it is the ground truth the losses are
checked against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ZeroAreaInput
from .kernels import cuboid_corners, quat_to_matrix
from .shapes import Cuboid, Ellipse, Polygon, RotatedRect, vertices

COLLISION_AREA = 1e-12


@dataclass(frozen=True)
class ExactOverlap:
    intersection: float
    union: float
    hull: float
    iou: float
    giou: float


@dataclass(frozen=True)
class MonteCarloIoU:
    iou: float
    stderr: float
    samples: int


def _as_points(poly) -> list:
    if isinstance(poly, list) and (not poly or isinstance(poly[0], tuple)):
        return poly
    if isinstance(poly, (RotatedRect, Polygon, Ellipse)):
        verts = vertices(poly)
    else:
        verts = poly
    return [(float(x), float(y)) for x, y in np.asarray(verts, dtype=float)]


def polygon_area(poly) -> float:
    """Signed shoelace area (positive for counter-clockwise loops)."""
    pts = _as_points(poly) if not isinstance(poly, list) else poly
    n = len(pts)
    s = 0.0
    for i in range(n):
        x0, y0 = pts[i]
        x1, y1 = pts[(i + 1) % n]
        s += x0 * y1 - x1 * y0
    return 0.5 * s


def _ccw(pts: list) -> list:
    return pts if polygon_area(pts) >= 0 else pts[::-1]


def clip_convex(subject, clipper) -> np.ndarray:
    """Sutherland-Hodgman clipping of ``subject`` by the convex ``clipper``.

    Both inputs are convex vertex loops; orientation is normalised to CCW.
    Returns the clipped loop as an ``(M, 2)`` array, ``M == 0`` when empty.
    """
    out = _ccw(_as_points(subject))
    clip = _ccw(_as_points(clipper))
    n = len(clip)
    for i in range(n):
        if not out:
            break
        ax, ay = clip[i]
        bx, by = clip[(i + 1) % n]
        ex, ey = bx - ax, by - ay
        src = out
        out = []
        sx, sy = src[-1]
        s_side = ex * (sy - ay) - ey * (sx - ax)
        for px, py in src:
            p_side = ex * (py - ay) - ey * (px - ax)
            if p_side >= 0:
                if s_side < 0:
                    t = s_side / (s_side - p_side)
                    out.append((sx + t * (px - sx), sy + t * (py - sy)))
                out.append((px, py))
            elif s_side >= 0:
                t = s_side / (s_side - p_side)
                out.append((sx + t * (px - sx), sy + t * (py - sy)))
            sx, sy, s_side = px, py, p_side
    return np.array(out, dtype=float).reshape(-1, 2)


def convex_hull(points) -> np.ndarray:
    """Andrew's monotone chain; CCW hull without collinear points."""
    pts = sorted(set(map(tuple, np.asarray(points, dtype=float).tolist())))
    if len(pts) <= 2:
        return np.array(pts, dtype=float).reshape(-1, 2)

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list = []
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1], dtype=float)


def intersection_area(p, g) -> float:
    clipped = clip_convex(p, g)
    if len(clipped) < 3:
        return 0.0
    return max(0.0, polygon_area(clipped.tolist()))


def exact_giou_2d(p, g) -> ExactOverlap:
    """IoU and GIoU of two convex polygons; enclosure is their joint convex hull."""
    pv, gv = _as_points(p), _as_points(g)
    area_p, area_g = abs(polygon_area(pv)), abs(polygon_area(gv))
    if area_p <= 0 or area_g <= 0:
        raise ZeroAreaInput("exact GIoU needs polygons with positive area")
    inter = min(intersection_area(pv, gv), area_p, area_g)
    union = area_p + area_g - inter
    hull = max(polygon_area(convex_hull(pv + gv).tolist()), union)
    iou = inter / union
    return ExactOverlap(inter, union, hull, iou, iou - (hull - union) / hull)


def collides(p, g) -> bool:
    return intersection_area(p, g) > COLLISION_AREA


def _inside_cuboid(points: np.ndarray, cub: Cuboid) -> np.ndarray:
    rot = quat_to_matrix(np.asarray(cub.quat, dtype=float)[None])[0]
    local = (points - np.asarray(cub.center)) @ rot
    return np.all(np.abs(local) <= 0.5 * np.asarray(cub.dims), axis=1)


def _aabb(cub: Cuboid):
    corners = cuboid_corners(cub.params()[None])[0]
    return corners.min(0), corners.max(0)


def mc_iou_3d(p: Cuboid, g: Cuboid, samples: int = 100_000, seed: int = 0) -> MonteCarloIoU:
    """Monte-Carlo IoU of two oriented cuboids.

    Points are drawn uniformly in the joint axis-aligned bounding box from a
    Philox (counter-based) generator seeded with ``seed``. The standard error
    is the binomial one, conditioned on the number of points in the union.
    Identical cuboids return exactly 1 and cuboids with disjoint bounding
    boxes exactly 0, both without sampling.
    """
    if samples < 10_000:
        raise ValueError(f"need at least 10^4 samples, got {samples}")
    if p == g:
        return MonteCarloIoU(1.0, 0.0, 0)
    lo_p, hi_p = _aabb(p)
    lo_g, hi_g = _aabb(g)
    if np.any(hi_p < lo_g) or np.any(hi_g < lo_p):
        return MonteCarloIoU(0.0, 0.0, 0)
    lo, hi = np.minimum(lo_p, lo_g), np.maximum(hi_p, hi_g)
    rng = np.random.Generator(np.random.Philox(seed))
    both = either = 0
    chunk = 200_000
    done = 0
    while done < samples:
        m = min(chunk, samples - done)
        pts = lo + (hi - lo) * rng.random((m, 3))
        in_p = _inside_cuboid(pts, p)
        in_g = _inside_cuboid(pts, g)
        both += int(np.count_nonzero(in_p & in_g))
        either += int(np.count_nonzero(in_p | in_g))
        done += m
    if either == 0:
        return MonteCarloIoU(0.0, 0.0, samples)
    iou = both / either
    return MonteCarloIoU(iou, math.sqrt(iou * (1.0 - iou) / either), samples)


__all__ = [
    "COLLISION_AREA",
    "ExactOverlap",
    "MonteCarloIoU",
    "clip_convex",
    "collides",
    "convex_hull",
    "exact_giou_2d",
    "intersection_area",
    "mc_iou_3d",
    "polygon_area",
]
