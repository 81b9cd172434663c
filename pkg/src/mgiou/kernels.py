"""Batched forward/backward kernels for shape parameters.

Every shape kind is handled through a *state* object built from a parameter
array of shape ``(B, n_params)``. A state can

* emit candidate normals ``(B, K, D)`` and back-propagate into them,
* project itself onto directions ``(B, K, D)`` giving ``lo, hi`` of shape
  ``(B, K)`` and back-propagate through the projection,
* return the accumulated gradient with respect to its parameters.

Gradients are vector-Jacobian products written out by hand. Ties in min/max
are attributed to the lowest index (``np.argmin``/``np.argmax`` semantics),
which keeps the result deterministic.

Parameter layouts::

    rect     cx, cy, w, h, angle
    cuboid   cx, cy, cz, l, w, h, qw, qx, qy, qz   (quaternion normalised inside)
    ellipse  cx, cy, s1, s2, angle
    polygon  x0, y0, x1, y1, ...                   (row-major vertices)
"""

from __future__ import annotations

import numpy as np

from .errors import DegenerateEdge

PARALLEL_TOL = 1e-9
SIGN_TOL = 1e-12
EDGE_TOL = 1e-12

# Rect corner order: CCW starting at the local (-w/2, -h/2) corner.
RECT_SX = np.array([-1.0, 1.0, 1.0, -1.0])
RECT_SY = np.array([-1.0, -1.0, 1.0, 1.0])

# Cuboid corner order: bottom face (z-) CCW seen from +z, then the top face.
CUBOID_SIGNS = np.array(
    [
        [-1, -1, -1],
        [1, -1, -1],
        [1, 1, -1],
        [-1, 1, -1],
        [-1, -1, 1],
        [1, -1, 1],
        [1, 1, 1],
        [-1, 1, 1],
    ],
    dtype=float,
)
# (a, b, c) per face; normal = (V[b] - V[a]) x (V[c] - V[a]).
CUBOID_FACES = np.array(
    [[0, 1, 3], [4, 5, 7], [0, 1, 4], [3, 2, 7], [0, 3, 4], [1, 2, 5]]
)


# ----------------------------------------------------------------------------
# parameter -> vertex maps


def rect_corners(params: np.ndarray) -> np.ndarray:
    cx, cy, w, h, t = (params[:, k : k + 1] for k in range(5))
    c, s = np.cos(t), np.sin(t)
    lx = RECT_SX * (0.5 * w)
    ly = RECT_SY * (0.5 * h)
    x = cx + c * lx - s * ly
    y = cy + s * lx + c * ly
    return np.stack((x, y), axis=-1)


def rect_corners_vjp(params: np.ndarray, g_v: np.ndarray) -> np.ndarray:
    w, h, t = params[:, 2:3], params[:, 3:4], params[:, 4:5]
    c, s = np.cos(t), np.sin(t)
    lx = RECT_SX * (0.5 * w)
    ly = RECT_SY * (0.5 * h)
    gx, gy = g_v[..., 0], g_v[..., 1]
    g_lx = c * gx + s * gy
    g_ly = -s * gx + c * gy
    out = np.empty_like(params)
    out[:, 0] = gx.sum(1)
    out[:, 1] = gy.sum(1)
    out[:, 2] = 0.5 * (g_lx * RECT_SX).sum(1)
    out[:, 3] = 0.5 * (g_ly * RECT_SY).sum(1)
    out[:, 4] = (gx * (-s * lx - c * ly) + gy * (c * lx - s * ly)).sum(1)
    return out


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    """Rotation matrices ``(B, 3, 3)`` from unit quaternions ``(B, 4)`` in w, x, y, z order."""
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    return np.stack(
        [
            np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], -1),
            np.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], -1),
            np.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], -1),
        ],
        axis=1,
    )


def _quat_matrix_vjp(q: np.ndarray, g: np.ndarray) -> np.ndarray:
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    g00, g01, g02 = g[:, 0, 0], g[:, 0, 1], g[:, 0, 2]
    g10, g11, g12 = g[:, 1, 0], g[:, 1, 1], g[:, 1, 2]
    g20, g21, g22 = g[:, 2, 0], g[:, 2, 1], g[:, 2, 2]
    gw = -z * g01 + y * g02 + z * g10 - x * g12 - y * g20 + x * g21
    gx = y * g01 + z * g02 + y * g10 - 2 * x * g11 - w * g12 + z * g20 + w * g21 - 2 * x * g22
    gy = -2 * y * g00 + x * g01 + w * g02 + x * g10 + z * g12 - w * g20 + z * g21 - 2 * y * g22
    gz = -2 * z * g00 - w * g01 + x * g02 + w * g10 - 2 * z * g11 + y * g12 + x * g20 + y * g21
    return 2.0 * np.stack([gw, gx, gy, gz], axis=-1)


def cuboid_corners(params: np.ndarray) -> np.ndarray:
    center, dims, q = params[:, 0:3], params[:, 3:6], params[:, 6:10]
    qn = q / np.linalg.norm(q, axis=1, keepdims=True)
    rot = quat_to_matrix(qn)
    local = CUBOID_SIGNS[None] * (0.5 * dims[:, None, :])
    return center[:, None, :] + local @ rot.transpose(0, 2, 1)


def cuboid_corners_vjp(params: np.ndarray, g_v: np.ndarray) -> np.ndarray:
    dims, q = params[:, 3:6], params[:, 6:10]
    qnorm = np.linalg.norm(q, axis=1, keepdims=True)
    qn = q / qnorm
    rot = quat_to_matrix(qn)
    local = CUBOID_SIGNS[None] * (0.5 * dims[:, None, :])
    out = np.empty_like(params)
    out[:, 0:3] = g_v.sum(1)
    g_local = g_v @ rot
    out[:, 3:6] = 0.5 * (g_local * CUBOID_SIGNS[None]).sum(1)
    g_rot = g_v.transpose(0, 2, 1) @ local
    g_qn = _quat_matrix_vjp(qn, g_rot)
    out[:, 6:10] = (g_qn - qn * (qn * g_qn).sum(1, keepdims=True)) / qnorm
    return out


# ----------------------------------------------------------------------------
# normal helpers


def _normalize_rows(u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norm = np.linalg.norm(u, axis=-1, keepdims=True)
    if np.any(norm < EDGE_TOL):
        raise DegenerateEdge(f"edge or face normal shorter than {EDGE_TOL}")
    return u / norm, norm


def _normalize_vjp(n: np.ndarray, norm: np.ndarray, g_n: np.ndarray) -> np.ndarray:
    return (g_n - n * (n * g_n).sum(-1, keepdims=True)) / norm


def edge_normals_2d(v: np.ndarray):
    """Unit normals of consecutive edges of 2D vertex loops ``(B, N, 2)``."""
    e = np.roll(v, -1, axis=1) - v
    u = np.stack((-e[..., 1], e[..., 0]), axis=-1)
    n, norm = _normalize_rows(u)
    return n, (n, norm)


def edge_normals_2d_vjp(ctx, g_n: np.ndarray) -> np.ndarray:
    n, norm = ctx
    g_u = _normalize_vjp(n, norm, g_n)
    g_e = np.stack((g_u[..., 1], -g_u[..., 0]), axis=-1)
    return np.roll(g_e, 1, axis=1) - g_e


def face_normals_cuboid(v: np.ndarray):
    a = v[:, CUBOID_FACES[:, 0]]
    e1 = v[:, CUBOID_FACES[:, 1]] - a
    e2 = v[:, CUBOID_FACES[:, 2]] - a
    u = np.cross(e1, e2)
    n, norm = _normalize_rows(u)
    return n, (n, norm, e1, e2)


def face_normals_cuboid_vjp(ctx, g_n: np.ndarray, n_vertices: int) -> np.ndarray:
    n, norm, e1, e2 = ctx
    g_u = _normalize_vjp(n, norm, g_n)
    g_e1 = np.cross(e2, g_u)
    g_e2 = np.cross(g_u, e1)
    g_v = np.zeros((n.shape[0], n_vertices, 3))
    np.add.at(g_v, (slice(None), CUBOID_FACES[:, 1]), g_e1)
    np.add.at(g_v, (slice(None), CUBOID_FACES[:, 2]), g_e2)
    np.add.at(g_v, (slice(None), CUBOID_FACES[:, 0]), -(g_e1 + g_e2))
    return g_v


def canonical_sign(dirs: np.ndarray) -> np.ndarray:
    """+1/-1 per row so that the first component with ``|x| > SIGN_TOL`` is positive."""
    significant = np.abs(dirs) > SIGN_TOL
    first = np.argmax(significant, axis=-1)
    lead = np.take_along_axis(dirs, first[..., None], axis=-1)[..., 0]
    return np.where(lead < 0, -1.0, 1.0)


def _lex_greater(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise ``a > b`` in lexicographic order over the last axis."""
    out = np.zeros(a.shape[:-1], dtype=bool)
    for d in range(a.shape[-1] - 1, -1, -1):
        out = (a[..., d] > b[..., d]) | ((a[..., d] == b[..., d]) & out)
    return out


def merge_normals(cand: np.ndarray):
    """Collapse parallel candidate normals ``(B, K, D)``.

    Candidates are scanned in order; each one either seeds a new cluster or
    joins the first earlier seed it is parallel to (``|dot| > 1 - 1e-9``,
    anti-parallel counts as parallel). A cluster is represented by one of its
    own members: the one whose canonical-sign vector is lexicographically
    largest. That choice does not depend on candidate order, and unlike an
    average it keeps nearly parallel but distinct normals from cancelling.
    Slots that are not seeds are returned as zero rows with ``valid == False``.
    """
    b, k, _ = cand.shape
    dots = cand @ cand.transpose(0, 2, 1)
    par = np.abs(dots) > 1.0 - PARALLEL_TOL
    seed = np.empty((b, k), dtype=np.intp)
    is_seed = np.zeros((b, k), dtype=bool)
    seed[:, 0] = 0
    is_seed[:, 0] = True
    for j in range(1, k):
        hit = par[:, :j, j] & is_seed[:, :j]
        has = hit.any(axis=1)
        seed[:, j] = np.where(has, np.argmax(hit, axis=1), j)
        is_seed[:, j] = ~has
    canon = cand * canonical_sign(cand)[..., None]
    rows = np.arange(b)
    best = np.tile(np.arange(k), (b, 1))
    for j in range(1, k):
        s = seed[:, j]
        cur = best[rows, s]
        take = (s != j) & _lex_greater(canon[:, j], canon[rows, cur])
        best[rows[take], s[take]] = j
    # weights[b, i, j]: sign with which candidate j represents the cluster seeded at i
    weights = np.zeros((b, k, k))
    bi, si = np.nonzero(is_seed)
    rep = best[bi, si]
    weights[bi, si, rep] = canonical_sign(cand[bi, rep])
    m = weights @ cand
    norm = np.linalg.norm(m, axis=-1, keepdims=True)
    safe = np.where(is_seed[..., None], norm, 1.0)
    unit = np.where(is_seed[..., None], m / safe, 0.0)
    return unit + 0.0, is_seed, (weights, unit, safe, is_seed, seed)


def merge_normals_vjp(ctx, g_dirs: np.ndarray) -> np.ndarray:
    weights, n, norm, is_seed, _ = ctx
    g_m = np.where(is_seed[..., None], _normalize_vjp(n, norm, g_dirs), 0.0)
    return weights.transpose(0, 2, 1) @ g_m


# ----------------------------------------------------------------------------
# shape states


class VertexState:
    """Shape given by a vertex set; projections are min/max over vertices."""

    def __init__(self, params: np.ndarray, vertices: np.ndarray):
        self.params = params
        self.vertices = vertices
        self.g_vertices = np.zeros_like(vertices)

    @property
    def dim(self) -> int:
        return self.vertices.shape[-1]

    def normals(self):
        n, self._nctx = edge_normals_2d(self.vertices)
        return n

    def normals_vjp(self, g_n):
        self.g_vertices += edge_normals_2d_vjp(self._nctx, g_n)

    def project(self, dirs):
        self._proj = proj = self.vertices @ dirs.transpose(0, 2, 1)
        return proj.min(axis=1), proj.max(axis=1)

    def project_vjp(self, dirs, g_lo, g_hi):
        # ties go to the lowest vertex index (argmin/argmax return the first hit)
        n = self.vertices.shape[1]
        idx = np.arange(n)[None, :, None]
        w = (idx == np.argmin(self._proj, axis=1)[:, None, :]) * g_lo[:, None, :]
        w = w + (idx == np.argmax(self._proj, axis=1)[:, None, :]) * g_hi[:, None, :]
        self.g_vertices += w @ dirs
        return w.transpose(0, 2, 1) @ self.vertices

    def grad(self) -> np.ndarray:
        return self.g_vertices.reshape(self.params.shape)


class PolygonState(VertexState):
    def __init__(self, params):
        super().__init__(params, params.reshape(params.shape[0], -1, 2))


class RectState(VertexState):
    """Opposite rect edges are antiparallel by construction, so only the
    normals of edges 0 and 1 are offered for merging."""

    def __init__(self, params):
        super().__init__(params, rect_corners(params))

    def normals(self):
        n, self._nctx = edge_normals_2d(self.vertices[:, :3])
        return n[:, :2]

    def normals_vjp(self, g_n):
        g = np.zeros(g_n.shape[:1] + (3, 2))
        g[:, :2] = g_n
        self.g_vertices[:, :3] += edge_normals_2d_vjp(self._nctx, g)

    def grad(self):
        return rect_corners_vjp(self.params, self.g_vertices)


class CuboidState(VertexState):
    def __init__(self, params):
        super().__init__(params, cuboid_corners(params))

    def normals(self):
        n, self._nctx = face_normals_cuboid(self.vertices)
        return n

    def normals_vjp(self, g_n):
        self.g_vertices += face_normals_cuboid_vjp(self._nctx, g_n, 8)

    def grad(self):
        return cuboid_corners_vjp(self.params, self.g_vertices)


class EllipseState:
    """Ellipse handled through its support function ``h(a) = c.a + r(a)``."""

    dim = 2

    def __init__(self, params: np.ndarray):
        self.params = params
        self.g_params = np.zeros_like(params)
        t = params[:, 4]
        self.u1 = np.stack((np.cos(t), np.sin(t)), axis=-1)
        self.u2 = np.stack((-np.sin(t), np.cos(t)), axis=-1)

    def normals(self):
        return np.stack((self.u1, self.u2), axis=1)

    def normals_vjp(self, g_n):
        # d u1 / dt = u2, d u2 / dt = -u1
        self.g_params[:, 4] += (g_n[:, 0] * self.u2).sum(-1) - (g_n[:, 1] * self.u1).sum(-1)

    def project(self, dirs):
        c = self.params[:, None, 0:2]
        s1 = self.params[:, 2:3]
        s2 = self.params[:, 3:4]
        self._p1 = (dirs * self.u1[:, None, :]).sum(-1)
        self._p2 = (dirs * self.u2[:, None, :]).sum(-1)
        self._r = np.sqrt((s1 * self._p1) ** 2 + (s2 * self._p2) ** 2)
        mid = (dirs * c).sum(-1)
        return mid - self._r, mid + self._r

    def project_vjp(self, dirs, g_lo, g_hi):
        s1 = self.params[:, 2:3]
        s2 = self.params[:, 3:4]
        p1, p2 = self._p1, self._p2
        # zero-length directions (masked slots) give r == 0
        r = np.where(self._r > 0, self._r, 1.0)
        g_mid = g_lo + g_hi
        g_r = np.where(self._r > 0, g_hi - g_lo, 0.0)
        self.g_params[:, 0:2] += (g_mid[..., None] * dirs).sum(1)
        self.g_params[:, 2] += (g_r * s1 * p1 * p1 / r).sum(1)
        self.g_params[:, 3] += (g_r * s2 * p2 * p2 / r).sum(1)
        g_p1 = g_r * s1 * s1 * p1 / r
        g_p2 = g_r * s2 * s2 * p2 / r
        # d p1 / dt = p2, d p2 / dt = -p1
        self.g_params[:, 4] += (g_p1 * p2 - g_p2 * p1).sum(1)
        c = self.params[:, None, 0:2]
        return (
            g_mid[..., None] * c
            + g_p1[..., None] * self.u1[:, None, :]
            + g_p2[..., None] * self.u2[:, None, :]
        )

    def grad(self):
        return self.g_params


STATES = {
    "rect": RectState,
    "cuboid": CuboidState,
    "ellipse": EllipseState,
    "polygon": PolygonState,
}

N_PARAMS = {"rect": 5, "cuboid": 10, "ellipse": 5}
