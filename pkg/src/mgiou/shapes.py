"""Convex shape types, vertex expansion, normal extraction and projection.

Vertex orderings (documented because gradients are laid out along them):

* ``RotatedRect`` -> 4 CCW corners starting at the local ``(-w/2, -h/2)``
  corner, rotated by ``angle`` about the centre.
* ``Cuboid`` -> 8 corners with local sign pattern (x, y, z)::

      0 (-,-,-)  1 (+,-,-)  2 (+,+,-)  3 (-,+,-)
      4 (-,-,+)  5 (+,-,+)  6 (+,+,+)  7 (-,+,+)

  scaled by ``dims/2 = (l, w, h)/2``, rotated by the quaternion
  ``(qw, qx, qy, qz)`` and translated by the centre.
* ``Polygon`` -> its vertices, unchanged.
* ``Ellipse`` has no vertices; it is projected analytically.

JSON schema (angles in radians)::

    {"kind": "rect", "center": [cx, cy], "size": [w, h], "angle": t}
    {"kind": "cuboid", "center": [x, y, z], "dims": [l, w, h], "quat": [qw, qx, qy, qz]}
    {"kind": "ellipse", "center": [cx, cy], "semi_axes": [s1, s2], "angle": t}
    {"kind": "polygon", "vertices": [[x, y], ...]}
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from . import kernels
from .errors import (
    DegenerateEdge,
    DimensionMismatch,
    EllipseHasNoVertices,
    InvalidShape,
    TooFewVertices,
)
from .giou1d import Interval

QUAT_TOL = 1e-9


def _positive(name: str, *values: float) -> None:
    for v in values:
        if not (math.isfinite(v) and v > 0):
            raise InvalidShape(f"{name} must be finite and > 0, got {v}")


def _finite(name: str, *values: float) -> None:
    for v in values:
        if not math.isfinite(v):
            raise InvalidShape(f"{name} must be finite, got {v}")


@dataclass(frozen=True)
class RotatedRect:
    cx: float
    cy: float
    w: float
    h: float
    angle: float = 0.0
    kind = "rect"
    dim = 2

    def __post_init__(self):
        _finite("center/angle", self.cx, self.cy, self.angle)
        _positive("rect size", self.w, self.h)

    def params(self) -> np.ndarray:
        return np.array([self.cx, self.cy, self.w, self.h, self.angle], dtype=float)

    def to_dict(self) -> dict:
        return {"kind": "rect", "center": [self.cx, self.cy], "size": [self.w, self.h], "angle": self.angle}


@dataclass(frozen=True)
class Cuboid:
    center: tuple
    dims: tuple
    quat: tuple = (1.0, 0.0, 0.0, 0.0)
    kind = "cuboid"
    dim = 3

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(x) for x in self.center))
        object.__setattr__(self, "dims", tuple(float(x) for x in self.dims))
        object.__setattr__(self, "quat", tuple(float(x) for x in self.quat))
        if len(self.center) != 3 or len(self.dims) != 3 or len(self.quat) != 4:
            raise InvalidShape("cuboid needs a 3-vector center, 3 dims and a 4-component quaternion")
        _finite("cuboid center", *self.center)
        _positive("cuboid dims", *self.dims)
        norm = math.sqrt(sum(q * q for q in self.quat))
        if abs(norm - 1.0) > QUAT_TOL:
            raise InvalidShape(f"quaternion norm {norm} is not 1 within {QUAT_TOL}")

    def params(self) -> np.ndarray:
        return np.array([*self.center, *self.dims, *self.quat], dtype=float)

    def to_dict(self) -> dict:
        return {"kind": "cuboid", "center": list(self.center), "dims": list(self.dims), "quat": list(self.quat)}


@dataclass(frozen=True)
class Ellipse:
    center: tuple
    semi_axes: tuple
    angle: float = 0.0
    kind = "ellipse"
    dim = 2

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(x) for x in self.center))
        object.__setattr__(self, "semi_axes", tuple(float(x) for x in self.semi_axes))
        if len(self.center) != 2 or len(self.semi_axes) != 2:
            raise InvalidShape("ellipse needs a 2-vector center and two semi-axes")
        _finite("ellipse center/angle", *self.center, self.angle)
        _positive("ellipse semi-axes", *self.semi_axes)
        if self.semi_axes[0] < self.semi_axes[1]:
            raise InvalidShape("ellipse semi-axes must satisfy s1 >= s2")

    def params(self) -> np.ndarray:
        return np.array([*self.center, *self.semi_axes, self.angle], dtype=float)

    def to_dict(self) -> dict:
        return {"kind": "ellipse", "center": list(self.center), "semi_axes": list(self.semi_axes), "angle": self.angle}


@dataclass(frozen=True, eq=False)
class Polygon:
    """Counter-clockwise vertex loop ``(N, 2)``, ``N >= 3``."""

    vertices: np.ndarray = field(repr=False)
    kind = "polygon"
    dim = 2

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2:
            raise InvalidShape(f"polygon vertices must be (N, 2), got {v.shape}")
        if v.shape[0] < 3:
            raise TooFewVertices(f"polygon needs >= 3 vertices, got {v.shape[0]}")
        if not np.all(np.isfinite(v)):
            raise InvalidShape("polygon vertices must be finite")
        edges = np.roll(v, -1, axis=0) - v
        if np.any(np.linalg.norm(edges, axis=1) < kernels.EDGE_TOL):
            raise DegenerateEdge("polygon has consecutive vertices closer than 1e-12")
        if signed_area(v) <= 0:
            raise InvalidShape("polygon vertices must be counter-clockwise (positive signed area)")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    def __eq__(self, other):
        return isinstance(other, Polygon) and np.array_equal(self.vertices, other.vertices)

    def __hash__(self):
        return hash(self.vertices.tobytes())

    def __repr__(self):
        return f"Polygon(n={len(self.vertices)})"

    def params(self) -> np.ndarray:
        return self.vertices.ravel().copy()

    def to_dict(self) -> dict:
        return {"kind": "polygon", "vertices": self.vertices.tolist()}


ConvexShape = Union[RotatedRect, Cuboid, Ellipse, Polygon]


def signed_area(v) -> float:
    v = np.asarray(v, dtype=float)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def from_params(kind: str, params) -> ConvexShape:
    p = [float(x) for x in np.asarray(params, dtype=float).ravel()]
    if kind == "rect":
        return RotatedRect(*p)
    if kind == "cuboid":
        q = np.array(p[6:10])
        return Cuboid(p[0:3], p[3:6], tuple(q / np.linalg.norm(q)))
    if kind == "ellipse":
        return Ellipse(p[0:2], p[2:4], p[4])
    if kind == "polygon":
        return Polygon(np.reshape(p, (-1, 2)))
    raise InvalidShape(f"unknown shape kind {kind!r}")


def from_dict(d: dict) -> ConvexShape:
    try:
        kind = d["kind"]
        if kind == "rect":
            (cx, cy), (w, h) = d["center"], d["size"]
            return RotatedRect(float(cx), float(cy), float(w), float(h), float(d.get("angle", 0.0)))
        if kind == "cuboid":
            return Cuboid(d["center"], d["dims"], d.get("quat", (1.0, 0.0, 0.0, 0.0)))
        if kind == "ellipse":
            return Ellipse(d["center"], d["semi_axes"], float(d.get("angle", 0.0)))
        if kind == "polygon":
            return Polygon(d["vertices"])
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, InvalidShape):
            raise
        raise InvalidShape(f"malformed shape record: {exc}") from exc
    raise InvalidShape(f"unknown shape kind {kind!r}")


def to_dict(shape: ConvexShape) -> dict:
    return shape.to_dict()


def vertices(shape: ConvexShape) -> np.ndarray:
    if isinstance(shape, Ellipse):
        raise EllipseHasNoVertices("ellipses are projected analytically and have no vertex list")
    if isinstance(shape, Polygon):
        return np.array(shape.vertices)
    if isinstance(shape, RotatedRect):
        return kernels.rect_corners(shape.params()[None])[0]
    return kernels.cuboid_corners(shape.params()[None])[0]


def as_polygon(shape: ConvexShape) -> Polygon:
    """Polygon view of a rect (or a polygon); other kinds are rejected."""
    if isinstance(shape, Polygon):
        return shape
    if isinstance(shape, RotatedRect):
        return Polygon(vertices(shape))
    raise InvalidShape(f"{shape.kind} has no polygon form")


def state_for(shape: ConvexShape):
    return kernels.STATES[shape.kind](shape.params()[None])


@dataclass(frozen=True, eq=False)
class NormalSet:
    """Deduplicated unit projection directions shared by a shape pair.

    ``provenance[k]`` lists ``(role, index)`` for every candidate merged into
    direction ``k``; role is ``"p"`` or ``"g"`` and index is the edge/face
    (or semi-axis) number within that shape.
    """

    directions: np.ndarray
    provenance: tuple = ()

    def __post_init__(self):
        d = np.array(self.directions, dtype=float)
        if d.ndim != 2 or d.shape[0] == 0:
            raise InvalidShape("a NormalSet needs at least one direction")
        d.setflags(write=False)
        object.__setattr__(self, "directions", d)

    def __len__(self):
        return self.directions.shape[0]

    def __iter__(self):
        return iter(self.directions)

    @classmethod
    def union(cls, *sets: "NormalSet") -> "NormalSet":
        cand = np.concatenate([s.directions for s in sets])[None]
        dirs, valid, _ = kernels.merge_normals(cand)
        return cls(dirs[0][valid[0]])


def unique_normals(p: ConvexShape, g: ConvexShape) -> NormalSet:
    if p.dim != g.dim:
        raise DimensionMismatch(f"cannot pair a {p.dim}D shape with a {g.dim}D shape")
    np_ = state_for(p).normals()
    ng = state_for(g).normals()
    dirs, valid, ctx = kernels.merge_normals(np.concatenate((np_, ng), axis=1))
    seed = ctx[-1][0]
    roles = [("p", i) for i in range(np_.shape[1])] + [("g", i) for i in range(ng.shape[1])]
    prov = []
    for k in np.flatnonzero(valid[0]):
        prov.append(tuple(roles[j] for j in np.flatnonzero(seed == k)))
    return NormalSet(dirs[0][valid[0]], tuple(prov))


def project(shape: ConvexShape, direction) -> Interval:
    a = np.asarray(direction, dtype=float)
    if a.shape != (shape.dim,):
        raise DimensionMismatch(f"direction of shape {a.shape} for a {shape.dim}D shape")
    if abs(np.linalg.norm(a) - 1.0) > 1e-9:
        raise InvalidShape("projection direction must have unit norm")
    lo, hi = state_for(shape).project(a[None, None, :])
    return Interval(float(lo[0, 0]), float(hi[0, 0]))
