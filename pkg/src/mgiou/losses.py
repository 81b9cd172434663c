"""MGIoU, the convexity regularizer and MGIoU+.

The value path and the gradient path are the same code: ``PairGraph`` runs
the forward pass (normals -> merged directions -> interval projections ->
1D GIoU) and keeps what the backward pass needs.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DimensionMismatch, ModeShapeMismatch, NotPlanar, TooFewVertices
from .giou1d import giou1d_simplified_array, giou1d_vjp
from .shapes import ConvexShape, NormalSet, Polygon, as_polygon


class Mode(str, enum.Enum):
    STRUCTURED = "structured"
    UNSTRUCTURED = "unstructured"


@dataclass(frozen=True)
class MgiouConfig:
    lam: float = 1.0
    mode: Mode = Mode.STRUCTURED

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        if not (math.isfinite(self.lam) and self.lam >= 0):
            raise ValueError(f"convexity weight must be finite and >= 0, got {self.lam}")


@dataclass(frozen=True)
class MgiouResult:
    """``loss`` is always ``(1 - mgiou) / 2``; ``total`` adds ``lam * convexity``."""

    mgiou: float
    loss: float
    per_normal: list = field(default_factory=list)
    convexity: float = 0.0
    total: float = float("nan")

    def __post_init__(self):
        if math.isnan(self.total):
            object.__setattr__(self, "total", self.loss)

    def to_dict(self) -> dict:
        return {"mgiou": self.mgiou, "loss": self.loss, "convexity": self.convexity, "total": self.total}


class PairGraph:
    """Batched projection of shape pairs onto their shared directions.

    ``dirs`` fixes the projection directions instead of deriving them from
    the shapes: ``(K, D)`` shared by the whole batch, or ``(B, K, D)`` per
    pair with all-zero rows as padding. ``detach_normals`` stops gradients
    from flowing into the normal directions.
    """

    def __init__(self, kind_p, pp, kind_g, pg, dirs=None, detach_normals=False):
        self.sp = kernels.STATES[kind_p](np.asarray(pp, dtype=float))
        self.sg = kernels.STATES[kind_g](np.asarray(pg, dtype=float))
        if self.sp.dim != self.sg.dim:
            raise DimensionMismatch(f"cannot pair a {self.sp.dim}D shape with a {self.sg.dim}D shape")
        self.detach_normals = detach_normals
        b = self.sp.params.shape[0]
        if dirs is None:
            cp = self.sp.normals()
            cg = self.sg.normals()
            self._kp = cp.shape[1]
            self.dirs, self.valid, self._mctx = kernels.merge_normals(np.concatenate((cp, cg), axis=1))
        else:
            d = np.asarray(dirs, dtype=float)
            self.dirs = np.broadcast_to(d, (b,) + d.shape[-2:]).copy()
            self.valid = np.any(self.dirs != 0.0, axis=-1)
            self._mctx = None
        self.lo_p, self.hi_p = self.sp.project(self.dirs)
        self.lo_g, self.hi_g = self.sg.project(self.dirs)
        self.giou = giou1d_simplified_array(self.lo_p, self.hi_p, self.lo_g, self.hi_g)

    def backward(self, g_giou):
        g_a, g_b, g_c, g_d = giou1d_vjp(self.lo_p, self.hi_p, self.lo_g, self.hi_g, g_giou)
        g_dirs = self.sp.project_vjp(self.dirs, g_a, g_b) + self.sg.project_vjp(self.dirs, g_c, g_d)
        if self._mctx is not None and not self.detach_normals:
            g_cand = kernels.merge_normals_vjp(self._mctx, g_dirs)
            self.sp.normals_vjp(g_cand[:, : self._kp])
            self.sg.normals_vjp(g_cand[:, self._kp :])
        return self.sp.grad(), self.sg.grad()


def mgiou_eval(kind_p, pp, kind_g, pg, dirs=None, grad=False, detach_normals=False):
    """Batched MGIoU. Returns ``(mgiou, loss, graph, grads)``; ``grads`` is
    ``(d loss/d pp, d loss/d pg)`` when requested, else ``None``."""
    graph = PairGraph(kind_p, pp, kind_g, pg, dirs, detach_normals)
    count = graph.valid.sum(axis=1)
    mg = np.where(graph.valid, graph.giou, 0.0).sum(axis=1) / count
    loss = (1.0 - mg) / 2.0
    grads = None
    if grad:
        grads = graph.backward(np.where(graph.valid, -0.5 / count[:, None], 0.0))
    return mg, loss, graph, grads


def batch_mgiou(kind_p: str, pp, kind_g: str, pg, normals: NormalSet | None = None):
    """MGIoU and its loss for ``B`` pairs given as parameter arrays ``(B, n)``."""
    dirs = None if normals is None else normals.directions
    mg, loss, _, _ = mgiou_eval(kind_p, np.atleast_2d(pp), kind_g, np.atleast_2d(pg), dirs)
    return mg, loss


def _result(graph, mg, loss, convexity=0.0, total=None) -> MgiouResult:
    valid = graph.valid[0]
    per_normal = [(graph.dirs[0, k].copy(), float(graph.giou[0, k])) for k in np.flatnonzero(valid)]
    return MgiouResult(
        float(mg[0]),
        float(loss[0]),
        per_normal,
        float(convexity),
        float(loss[0] if total is None else total),
    )


def mgiou(p: ConvexShape, g: ConvexShape, normals: NormalSet | None = None) -> MgiouResult:
    """MGIoU of a single pair.

    Any two shapes of the same dimension are accepted; the projection axes are
    the merged normals of both shapes unless ``normals`` pins them.
    """
    if p.dim != g.dim:
        raise DimensionMismatch(f"cannot pair a {p.dim}D shape with a {g.dim}D shape")
    dirs = None if normals is None else normals.directions
    mg, loss, graph, _ = mgiou_eval(p.kind, p.params()[None], g.kind, g.params()[None], dirs)
    return _result(graph, mg, loss)


# ----------------------------------------------------------------------------
# convexity regularizer


def convexity_eval(v, grad=False):
    """Batched convexity penalty over vertex loops ``(B, N, 2)``.

    For edge ``i`` with ``n_i = (-e_y, e_x)`` (not normalised), the signed
    values ``(p_j - p_i) . n_i`` are split into their negative and positive
    hinge sums; the edge penalty is the smaller sum and the loss is the mean
    over edges. Hinges at exactly 0 and ties between the two sums take the
    zero / first-sum subgradient.
    """
    v = np.asarray(v, dtype=float)
    e = np.roll(v, -1, axis=1) - v
    n = np.stack((-e[..., 1], e[..., 0]), axis=-1)
    w = v[:, None, :, :] - v[:, :, None, :]  # w[b, i, j] = p_j - p_i
    d = np.einsum("bijk,bik->bij", w, n)
    s1 = np.maximum(0.0, -d).sum(-1)
    s2 = np.maximum(0.0, d).sum(-1)
    pen = np.minimum(s1, s2)
    loss = pen.mean(-1)
    if not grad:
        return loss, None
    nv = v.shape[1]
    pick1 = (s1 <= s2)[..., None]
    g_d = np.where(pick1, -(d < 0).astype(float), (d > 0).astype(float)) / nv
    g_w = g_d[..., None] * n[:, :, None, :]
    g_n = np.einsum("bij,bijk->bik", g_d, w)
    g_v = g_w.sum(axis=1) - g_w.sum(axis=2)
    g_e = np.stack((g_n[..., 1], -g_n[..., 0]), axis=-1)
    g_v += np.roll(g_e, 1, axis=1) - g_e
    return loss, g_v


def convexity_loss(poly) -> float:
    v = np.asarray(poly.vertices if isinstance(poly, Polygon) else poly, dtype=float)
    if v.ndim != 2:
        raise NotPlanar(f"expected an (N, 2) vertex array, got shape {v.shape}")
    if v.shape[1] != 2:
        raise NotPlanar(f"convexity loss is defined for 2D polygons, got D={v.shape[1]}")
    if v.shape[0] < 3:
        raise TooFewVertices(f"need >= 3 vertices, got {v.shape[0]}")
    return float(convexity_eval(v[None])[0][0])


# ----------------------------------------------------------------------------
# MGIoU+


def resolve_pair(p: ConvexShape, g: ConvexShape, cfg: MgiouConfig):
    """Decide how a pair is evaluated under ``cfg``.

    Returns ``(p, g, unstructured)`` with rects converted to polygons when the
    pair is routed through unstructured semantics.
    """
    if p.dim != g.dim:
        raise DimensionMismatch(f"cannot pair a {p.dim}D shape with a {g.dim}D shape")
    polygonal = {"rect", "polygon"}
    if cfg.mode is Mode.UNSTRUCTURED:
        if p.kind != "polygon" or g.kind != "polygon":
            raise ModeShapeMismatch(f"unstructured mode needs two polygons, got {p.kind} and {g.kind}")
        unstructured = True
    elif p.kind == g.kind and p.kind != "polygon":
        return p, g, False
    elif p.kind in polygonal and g.kind in polygonal:
        p, g = as_polygon(p), as_polygon(g)
        unstructured = True
    else:
        raise ModeShapeMismatch(f"structured mode cannot pair {p.kind} with {g.kind}")
    if len(g.vertices) < len(p.vertices):
        warnings.warn(
            f"target has fewer vertices ({len(g.vertices)}) than prediction ({len(p.vertices)})",
            stacklevel=3,
        )
    return p, g, unstructured


def mgiou_plus_eval(pv, gv, lam, grad=False, detach_normals=False):
    """Batched MGIoU+ on polygon vertex arrays ``(B, N, 2)`` and ``(B, M, 2)``."""
    b = pv.shape[0]
    mg, loss, graph, grads = mgiou_eval(
        "polygon", pv.reshape(b, -1), "polygon", gv.reshape(b, -1), grad=grad, detach_normals=detach_normals
    )
    conv, g_conv = convexity_eval(pv, grad=grad)
    total = loss + lam * conv
    out_grads = None
    if grad:
        g_p = grads[0].reshape(pv.shape) + lam * g_conv
        out_grads = (g_p, grads[1].reshape(gv.shape))
    return mg, loss, conv, total, graph, out_grads


def mgiou_plus(p: ConvexShape, g: ConvexShape, cfg: MgiouConfig = MgiouConfig()) -> MgiouResult:
    p, g, unstructured = resolve_pair(p, g, cfg)
    if not unstructured:
        return mgiou(p, g)
    mg, loss, conv, total, graph, _ = mgiou_plus_eval(p.vertices[None], g.vertices[None], cfg.lam)
    return _result(graph, mg, loss, conv[0], total[0])
