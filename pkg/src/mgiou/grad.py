"""Exact gradients of every loss and a central-difference verifier.

Gradients are returned w.r.t. a flat parameter vector whose layout is given
by ``LossValue.layout``: prediction parameters first, then target parameters
(or box ``i`` then box ``j`` for the pair penalty). Per-kind parameter
orders are documented in :mod:`mgiou.kernels`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import KinkDetected, MGIoUError
from .losses import MgiouConfig, mgiou_eval, mgiou_plus_eval, resolve_pair
from .overlap import TrajectoryBatch, mgiou_minus_eval, pair_penalty_eval

LOSS_IDS = ("mgiou", "mgiou_plus", "mgiou_minus_pair", "mgiou_minus")

PARAM_NAMES = {
    "rect": ("cx", "cy", "w", "h", "angle"),
    "cuboid": ("cx", "cy", "cz", "l", "w", "h", "qw", "qx", "qy", "qz"),
    "ellipse": ("cx", "cy", "s1", "s2", "angle"),
}


def param_names(shape, prefix: str) -> tuple:
    if shape.kind == "polygon":
        n = len(shape.vertices)
        return tuple(f"{prefix}.{c}{k}" for k in range(n) for c in "xy")
    return tuple(f"{prefix}.{name}" for name in PARAM_NAMES[shape.kind])


@dataclass(frozen=True)
class LossValue:
    value: float
    gradient: np.ndarray
    layout: tuple

    def __post_init__(self):
        if len(self.gradient) != len(self.layout):
            raise ValueError("gradient length does not match its layout")


class LossProblem:
    """A loss seen as a function of one flat float vector.

    Parameters are not re-validated when ``x`` moves, so quaternions may leave
    the unit sphere (they are normalised inside) and polygons may lose
    convexity.
    """

    def __init__(self, loss_id, *inputs, cfg: MgiouConfig | None = None, detach_normals=False):
        if loss_id not in LOSS_IDS:
            raise MGIoUError(f"unknown loss id {loss_id!r}; expected one of {LOSS_IDS}")
        self.loss_id = loss_id
        self.cfg = cfg or MgiouConfig()
        self.detach_normals = detach_normals
        if loss_id in ("mgiou", "mgiou_plus"):
            p, g = inputs
            unstructured = False
            if loss_id == "mgiou_plus":
                p, g, unstructured = resolve_pair(p, g, self.cfg)
            self.unstructured = unstructured
            self.kinds = (p.kind, g.kind)
            self.split = len(p.params())
            self.x0 = np.concatenate((p.params(), g.params()))
            self.layout = param_names(p, "p") + param_names(g, "g")
            if unstructured:
                self._pshape = p.vertices.shape
                self._gshape = g.vertices.shape
        elif loss_id == "mgiou_minus_pair":
            bi, bj = (np.asarray(b, dtype=float) for b in inputs)
            if bi.shape != (4, 2) or bj.shape != (4, 2):
                raise MGIoUError("pair penalty boxes must be (4, 2)")
            self.split = 8
            self.x0 = np.concatenate((bi.ravel(), bj.ravel()))
            self.layout = tuple(f"{r}.{c}{k}" for r in "ij" for k in range(4) for c in "xy")
        else:
            (batch,) = inputs
            if not isinstance(batch, TrajectoryBatch):
                raise MGIoUError("mgiou_minus expects a TrajectoryBatch")
            self._batch = batch
            self.x0 = batch.boxes.ravel().copy()
            t, b = batch.boxes.shape[:2]
            self.layout = tuple(
                f"t{s}.a{i}.{c}{k}" for s in range(t) for i in range(b) for k in range(4) for c in "xy"
            )

    def evaluate(self, x, grad: bool = False):
        x = np.asarray(x, dtype=float)
        if self.loss_id == "mgiou" or (self.loss_id == "mgiou_plus" and not self.unstructured):
            pp, pg = x[None, : self.split], x[None, self.split :]
            _, loss, _, grads = mgiou_eval(
                self.kinds[0], pp, self.kinds[1], pg, grad=grad, detach_normals=self.detach_normals
            )
            value = float(loss[0])
        elif self.loss_id == "mgiou_plus":
            pv = x[: self.split].reshape((1,) + self._pshape)
            gv = x[self.split :].reshape((1,) + self._gshape)
            out = mgiou_plus_eval(pv, gv, self.cfg.lam, grad=grad, detach_normals=self.detach_normals)
            value, grads = float(out[3][0]), out[5]
        elif self.loss_id == "mgiou_minus_pair":
            k, _, grads = pair_penalty_eval(x[None, :8].reshape(1, 4, 2), x[None, 8:].reshape(1, 4, 2), grad)
            value = float(k[0])
        else:
            b = self._batch
            value, _, _, g_boxes = mgiou_minus_eval(x.reshape(b.boxes.shape), b.masks, b.scores, grad)
            return value, (g_boxes.ravel() if grad else None)
        if not grad:
            return value, None
        return value, np.concatenate([g.ravel() for g in grads])

    def value(self, x) -> float:
        return self.evaluate(x)[0]


def loss_with_grad(loss_id: str, *inputs, cfg: MgiouConfig | None = None, detach_normals=False) -> LossValue:
    """Loss value and exact gradient.

    ``loss_id`` is one of ``mgiou`` / ``mgiou_plus`` (inputs: two shapes),
    ``mgiou_minus_pair`` (two ``(4, 2)`` boxes) or ``mgiou_minus`` (a
    :class:`TrajectoryBatch`).
    """
    prob = LossProblem(loss_id, *inputs, cfg=cfg, detach_normals=detach_normals)
    value, g = prob.evaluate(prob.x0, grad=True)
    return LossValue(value, g, prob.layout)


def finite_difference(f, x, h: float = 1e-5) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    for i in range(len(x)):
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        out[i] = (f(xp) - f(xm)) / (2 * h)
    return out


def _gradient_errors(prob: LossProblem, x, h: float, kink_tol: float):
    _, analytic = prob.evaluate(x, grad=True)
    f0 = prob.value(x)
    worst = 0.0
    for i in range(len(x)):
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        fp, fm = prob.value(xp), prob.value(xm)
        numeric = (fp - fm) / (2 * h)
        scale = max(1.0, abs(numeric))
        # one-sided slopes disagree by O(1) when a min/max switches inside [x-h, x+h]
        if abs((fp - f0) - (f0 - fm)) / h > kink_tol * scale:
            return None
        worst = max(worst, abs(analytic[i] - numeric) / scale)
    return worst


def check_grad(
    loss_id: str,
    *inputs,
    h: float = 1e-5,
    cfg: MgiouConfig | None = None,
    seed: int = 0,
    retries: int = 5,
    kink_tol: float = 1e-3,
    jitter: float = 1e-4,
) -> float:
    """Max relative error ``|analytic - numeric| / max(1, |numeric|)`` over coordinates.

    When a coordinate's one-sided differences disagree (a min/max tie or
    hinge lies within ``h``), the whole input is jittered by ``jitter``
    (relative) and the check is repeated, at most ``retries`` times.
    """
    prob = LossProblem(loss_id, *inputs, cfg=cfg)
    rng = np.random.default_rng(seed)
    x = prob.x0.copy()
    for _ in range(retries):
        err = _gradient_errors(prob, x, h, kink_tol)
        if err is not None:
            return err
        x = prob.x0 + jitter * np.maximum(1.0, np.abs(prob.x0)) * rng.standard_normal(x.shape)
    raise KinkDetected(f"{loss_id}: inputs stayed within {h} of a kink after {retries} perturbations")
