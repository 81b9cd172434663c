"""Gradient-descent harness: align a shape to a target, or push trajectory
boxes apart.

Structured shapes are optimised in an unconstrained space where every size
is stored as its logarithm, so sizes stay positive. Polygons are optimised on
their raw vertices with the convexity regularizer active (MGIoU+). Trajectory
boxes move rigidly: each box gets a translation and a rotation about its
initial centroid.

Updates are heavy-ball: ``v <- momentum * v - lr * grad``; ``x <- x + v``.

Separation adds one more rule. When two boxes still overlap on every normal
(smallest 1D GIoU above 0) but the argmin normal has one projection nested
inside the other, the penalty is flat in both boxes' translations and the
gradient gives no way out. A box in that state with an overlapping partner
gets a seeded random translation kick of ``plateau_kick`` times its
circumradius, added to its velocity.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import oracle
from .errors import DegenerateEdge, DivergenceDetected, MGIoUError
from .losses import mgiou_eval, mgiou_plus_eval
from .overlap import TrajectoryBatch, count_collisions, mgiou_minus_eval
from .shapes import ConvexShape, Polygon, from_params

LN2 = math.log(2.0)
DIVERGENCE_FACTOR = 10.0
DIVERGENCE_PATIENCE = 50
# losses this small never count as divergent, however small the initial loss was
DIVERGENCE_FLOOR = 0.01
ELLIPSE_ORACLE_VERTICES = 512
FIT_LOSSES = (None, "mgiou", "mgiou_plus", "mgiou_minus")
# a translation gradient below this counts as zero (flat penalty)
PLATEAU_GRAD = 1e-9


@dataclass(frozen=True)
class FitConfig:
    steps: int = 2000
    lr: float = 0.05
    momentum: float = 0.9
    lam: float = 1.0
    seed: int = 0
    tol: float = 1e-6
    snapshot_every: int = 100
    # linear decay of the step size to lr * final_lr_scale over the run; 1.0 keeps it constant
    final_lr_scale: float = 0.01
    # None picks MGIoU+ for polygons, MGIoU for other shapes and MGIoU- for trajectories
    loss_id: str | None = None
    # separation only: random translation kick on flat overlap, as a fraction of box radius; 0 disables
    plateau_kick: float = 0.05

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if not self.lr > 0:
            raise ValueError("lr must be > 0")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must be in [0, 1)")
        if not 0 < self.final_lr_scale <= 1:
            raise ValueError("final_lr_scale must be in (0, 1]")
        if self.loss_id not in FIT_LOSSES:
            raise ValueError(f"loss_id must be one of {FIT_LOSSES}")
        if self.snapshot_every < 1:
            raise ValueError("snapshot_every must be >= 1")
        if not self.plateau_kick >= 0:
            raise ValueError("plateau_kick must be >= 0")

    def lr_at(self, step: int) -> float:
        frac = step / max(1, self.steps - 1)
        return self.lr * (1.0 - (1.0 - self.final_lr_scale) * frac)


@dataclass
class FitTrace:
    """Per-step loss and oracle metric (IoU for shapes, collision count for
    trajectories), parameter snapshots every ``snapshot_every`` steps, and the
    final state."""

    losses: list = field(default_factory=list)
    metric: list = field(default_factory=list)
    metric_name: str = "exact_iou"
    snapshots: list = field(default_factory=list)
    final: object = None
    converged: bool = False
    # polygon fits only: convexity loss of the evaluated vertices at each step
    convexity: list = field(default_factory=list)

    @property
    def steps_run(self) -> int:
        return len(self.losses)

    def to_csv(self, header_lines=()) -> str:
        buf = io.StringIO()
        for line in header_lines:
            buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "loss", self.metric_name])
        for i, (loss, m) in enumerate(zip(self.losses, self.metric)):
            w.writerow([i, repr(float(loss)), repr(float(m)) if isinstance(m, float) else m])
        return buf.getvalue()


# ----------------------------------------------------------------------------
# shape <-> unconstrained vector


def _encode(shape: ConvexShape) -> np.ndarray:
    p = shape.params()
    if shape.kind in ("rect", "ellipse"):
        p[2:4] = np.log(p[2:4])
    elif shape.kind == "cuboid":
        p[3:6] = np.log(p[3:6])
    return p


def _decode_params(kind: str, x: np.ndarray) -> np.ndarray:
    p = x.copy()
    if kind in ("rect", "ellipse"):
        p[..., 2:4] = np.exp(p[..., 2:4])
    elif kind == "cuboid":
        p[..., 3:6] = np.exp(p[..., 3:6])
    return p


def _chain(kind: str, x: np.ndarray, g_params: np.ndarray) -> np.ndarray:
    g = g_params.copy()
    if kind in ("rect", "ellipse"):
        g[..., 2:4] *= np.exp(x[..., 2:4])
    elif kind == "cuboid":
        g[..., 3:6] *= np.exp(x[..., 3:6])
    return g


def _shape_of(kind: str, p: np.ndarray) -> ConvexShape:
    p = p.copy()
    if kind == "ellipse" and p[2] < p[3]:
        p[2], p[3] = p[3], p[2]
        p[4] += math.pi / 2
    if kind == "polygon":
        v = p.reshape(-1, 2)
        if oracle.polygon_area(v) < 0:
            v = v[::-1]
        return Polygon(v)
    return from_params(kind, p)


def _ellipse_polygon(p: np.ndarray, n: int = ELLIPSE_ORACLE_VERTICES) -> np.ndarray:
    t = np.linspace(0.0, 2 * math.pi, n, endpoint=False)
    c, s = math.cos(p[4]), math.sin(p[4])
    x, y = p[2] * np.cos(t), p[3] * np.sin(t)
    return np.stack((p[0] + c * x - s * y, p[1] + s * x + c * y), axis=1)


def _rect_points(p) -> list:
    cx, cy, w, h, a = (float(v) for v in p)
    c, s = math.cos(a), math.sin(a)
    out = []
    for sx, sy in ((-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)):
        x, y = sx * w, sy * h
        out.append((cx + c * x - s * y, cy + s * x + c * y))
    return out


def _oracle_points(kind: str, pp: np.ndarray):
    if kind == "rect":
        return _rect_points(pp)
    if kind == "ellipse":
        return _ellipse_polygon(pp).tolist()
    return [tuple(v) for v in np.asarray(pp, dtype=float).reshape(-1, 2).tolist()]


def _iou_points(a: list, b: list) -> float:
    area_a, area_b = abs(oracle.polygon_area(a)), abs(oracle.polygon_area(b))
    if area_a <= 0 or area_b <= 0:
        return 0.0
    inter = min(oracle.intersection_area(a, b), area_a, area_b)
    return inter / (area_a + area_b - inter)


def exact_iou_params(kind: str, pp: np.ndarray, target: ConvexShape, seed: int = 0) -> float:
    """Reference IoU of a parameter vector against ``target``.

    Ellipses are compared as inscribed 512-gons; cuboids by Monte-Carlo with
    10^5 samples. A polygon whose vertex loop has lost convexity is scored
    by clipping against its convex hull.
    """
    if kind == "cuboid":
        return oracle.mc_iou_3d(from_params("cuboid", pp), target, 100_000, seed).iou
    a = _oracle_points(kind, pp)
    if kind == "polygon":
        a = [tuple(v) for v in oracle.convex_hull(a).tolist()]
        if len(a) < 3:
            return 0.0
    return _iou_points(a, _oracle_points(kind, target.params()))


# ----------------------------------------------------------------------------


class _Divergence:
    def __init__(self, initial: float):
        self.limit = max(DIVERGENCE_FACTOR * initial, DIVERGENCE_FLOOR)
        self.run = 0

    def update(self, loss: float) -> None:
        self.run = self.run + 1 if (loss > self.limit or not math.isfinite(loss)) else 0
        if self.run >= DIVERGENCE_PATIENCE:
            raise DivergenceDetected(
                f"loss above {self.limit:.3g} for {DIVERGENCE_PATIENCE} consecutive steps"
            )


def _signature(init: ConvexShape, target: ConvexShape) -> tuple:
    if init.kind != target.kind:
        raise MGIoUError(f"fit needs matching kinds, got {init.kind} and {target.kind}")
    if init.kind == "polygon":
        return ("polygon", len(init.vertices), len(target.vertices))
    return (init.kind,)


def _loss_and_grad(kind: str, pp: np.ndarray, pg: np.ndarray, lam: float):
    if kind == "polygon":
        b = len(pp)
        out = mgiou_plus_eval(pp.reshape(b, -1, 2), pg.reshape(b, -1, 2), lam, grad=True)
        return out[3], out[5][0].reshape(b, -1), out[2]
    _, loss, _, grads = mgiou_eval(kind, pp, kind, pg, grad=True)
    return loss, grads[0], None


def _fit_group(inits, targets, cfg: FitConfig, track_iou: bool) -> list:
    kind = inits[0].kind
    if cfg.loss_id == "mgiou_minus":
        raise MGIoUError("mgiou_minus is a trajectory loss; use fit_separation")
    lam = 0.0 if cfg.loss_id == "mgiou" else cfg.lam
    x = np.stack([_encode(s) for s in inits])
    # the exact parameters last evaluated per fit; step 0 sees the inputs bit for bit
    evaluated = np.stack([s.params() for s in inits])
    pg = np.stack([t.params() for t in targets])
    target_pts = [_oracle_points(kind, t.params()) for t in targets] if kind != "cuboid" else None
    vel = np.zeros_like(x)
    traces = [FitTrace() for _ in inits]
    guards = [None] * len(inits)
    active = np.arange(len(inits))
    for step in range(cfg.steps):
        pp = evaluated[active] if step == 0 else _decode_params(kind, x[active])
        evaluated[active] = pp
        if not np.all(np.isfinite(pp)):
            raise DivergenceDetected(f"parameters became non-finite at step {step}")
        try:
            loss, g_p, conv = _loss_and_grad(kind, pp, pg[active], lam)
        except DegenerateEdge as exc:
            # a size or an edge collapsed under an oversized step
            raise DivergenceDetected(f"shape collapsed at step {step}: {exc}") from exc
        on_snapshot = step % cfg.snapshot_every == 0
        keep = np.ones(len(active), dtype=bool)
        for r, idx in enumerate(active):
            tr, lv = traces[idx], float(loss[r])
            tr.losses.append(lv)
            if conv is not None:
                tr.convexity.append(float(conv[r]))
            if not track_iou:
                tr.metric.append(float("nan"))
            elif kind == "cuboid":
                tr.metric.append(exact_iou_params(kind, pp[r], targets[idx], cfg.seed) if on_snapshot else float("nan"))
            elif kind == "polygon":
                tr.metric.append(exact_iou_params(kind, pp[r], targets[idx]))
            else:
                tr.metric.append(_iou_points(_oracle_points(kind, pp[r]), target_pts[idx]))
            if on_snapshot:
                tr.snapshots.append((step, pp[r].copy()))
            if guards[idx] is None:
                guards[idx] = _Divergence(lv)
            guards[idx].update(lv)
            if lv < cfg.tol:
                tr.converged = True
                keep[r] = False
        if step == cfg.steps - 1:
            break
        g = _chain(kind, x[active], g_p)
        v = cfg.momentum * vel[active] - cfg.lr_at(step) * g
        # converged fits stay where they were evaluated
        v[~keep] = 0.0
        vel[active] = v
        x[active] = x[active] + v
        active = active[keep]
        if len(active) == 0:
            break
    for idx, tr in enumerate(traces):
        tr.final = _shape_of(kind, evaluated[idx])
    return traces


def fit_shapes(inits, targets, cfg: FitConfig = FitConfig(), track_iou: bool = True) -> list:
    """Run independent fits side by side; returns one :class:`FitTrace` each.

    Fits with the same kind (and, for polygons, the same vertex counts) share
    one batched loss evaluation per step. Each fit stops on its own once its
    loss drops below ``cfg.tol``.
    """
    if len(inits) != len(targets):
        raise MGIoUError(f"{len(inits)} initial shapes but {len(targets)} targets")
    groups: dict = {}
    for i, (a, b) in enumerate(zip(inits, targets)):
        groups.setdefault(_signature(a, b), []).append(i)
    out = [None] * len(inits)
    for idx in groups.values():
        traces = _fit_group([inits[i] for i in idx], [targets[i] for i in idx], cfg, track_iou)
        for i, tr in zip(idx, traces):
            out[i] = tr
    return out


def fit_shape(init: ConvexShape, target: ConvexShape, cfg: FitConfig = FitConfig(), track_iou=True) -> FitTrace:
    """Drive ``init`` towards ``target`` with MGIoU (MGIoU+ for polygons).

    The trace records the loss and the reference IoU of the parameters the
    loss was evaluated at; cuboid IoUs are only computed on snapshot steps
    (NaN elsewhere).
    """
    return fit_shapes([init], [target], cfg, track_iou)[0]


def _posed(boxes0, local, pose):
    # b0 + (R - I) local + t: a zero pose returns the input boxes bit for bit
    c, s = np.cos(pose[..., 2]) - 1.0, np.sin(pose[..., 2])
    x = c[..., None] * local[..., 0] - s[..., None] * local[..., 1]
    y = s[..., None] * local[..., 0] + c[..., None] * local[..., 1]
    return boxes0 + pose[..., None, 0:2] + np.stack((x, y), axis=-1)


def _pose_grad(local, pose, g_boxes):
    c, s = np.cos(pose[..., 2]), np.sin(pose[..., 2])
    rx = c[..., None] * local[..., 0] - s[..., None] * local[..., 1]
    ry = s[..., None] * local[..., 0] + c[..., None] * local[..., 1]
    g = np.empty_like(pose)
    g[..., 0:2] = g_boxes.sum(axis=-2)
    g[..., 2] = (-g_boxes[..., 0] * ry + g_boxes[..., 1] * rx).sum(axis=-1)
    return g


def _separate_group(batches, cfg: FitConfig) -> list:
    n = len(batches)
    t, b = batches[0].boxes.shape[:2]
    # pairs never cross timesteps, so batches stack along the time axis
    boxes0 = np.concatenate([bt.boxes for bt in batches])
    weights = np.concatenate([bt.masks * bt.scores[None, :] for bt in batches])
    local = boxes0 - boxes0.mean(axis=2, keepdims=True)
    kick = cfg.plateau_kick * np.linalg.norm(local, axis=-1).max(axis=-1)
    rng = np.random.default_rng(cfg.seed)
    pose = np.zeros(boxes0.shape[:2] + (3,))
    vel = np.zeros_like(pose)
    traces = [FitTrace(metric_name="collisions") for _ in batches]
    guards = [None] * n
    live = np.ones(n, dtype=bool)
    ones = np.ones(b)
    for step in range(cfg.steps):
        boxes = _posed(boxes0, local, pose)
        _, _, pen, g_boxes = mgiou_minus_eval(boxes, weights, ones, grad=True)
        losses = (weights * pen.sum(axis=2)).reshape(n, t, b).sum(axis=(1, 2))
        for k in np.flatnonzero(live):
            tr, lv, sl = traces[k], float(losses[k]), slice(k * t, (k + 1) * t)
            tr.losses.append(lv)
            tr.metric.append(count_collisions(boxes[sl], batches[k].masks))
            if step % cfg.snapshot_every == 0:
                tr.snapshots.append((step, boxes[sl].copy()))
            if guards[k] is None:
                guards[k] = _Divergence(lv)
            guards[k].update(lv)
            if lv < cfg.tol:
                tr.converged = True
                live[k] = False
        if step == cfg.steps - 1 or not live.any():
            break
        step_mask = np.repeat(live, t)[:, None, None]
        g = _pose_grad(local, pose, g_boxes)
        vel = cfg.momentum * vel - cfg.lr_at(step) * g
        # softplus(0) = ln 2: above it the pair overlaps on every normal
        overlap = ((pen > LN2) & (weights[:, None, :] > 0)).any(axis=2) & (weights > 0)
        flat = overlap & (np.linalg.norm(g[..., :2], axis=-1) < PLATEAU_GRAD)
        # one draw per box and step keeps runs reproducible whatever gets kicked
        d = rng.standard_normal(flat.shape + (2,))
        d /= np.maximum(np.linalg.norm(d, axis=-1, keepdims=True), 1e-300)
        vel[..., :2] += np.where(flat[..., None], kick[..., None] * d, 0.0)
        vel = np.where(step_mask, vel, 0.0)
        pose = pose + vel
    final = _posed(boxes0, local, pose)
    for k, tr in enumerate(traces):
        tr.final = batches[k].with_boxes(final[k * t : (k + 1) * t])
    return traces


def fit_separations(batches, cfg: FitConfig = FitConfig()) -> list:
    """Independent separation fits, batched by ``(T, B)``; one trace per batch."""
    if cfg.loss_id not in (None, "mgiou_minus"):
        raise MGIoUError(f"separation descends mgiou_minus, not {cfg.loss_id}")
    groups: dict = {}
    for i, bt in enumerate(batches):
        if bt.n_agents < 2:
            raise MGIoUError("separation needs at least two agents")
        groups.setdefault(bt.boxes.shape[:2], []).append(i)
    out = [None] * len(batches)
    for idx in groups.values():
        for i, tr in zip(idx, _separate_group([batches[i] for i in idx], cfg)):
            out[i] = tr
    return out


def fit_separation(batch: TrajectoryBatch, cfg: FitConfig = FitConfig()) -> FitTrace:
    """Descend MGIoU- over rigid box poses (a translation and a rotation per
    box); the trace metric is the exact collision count at each step."""
    return fit_separations([batch], cfg)[0]


__all__ = ["FitConfig", "FitTrace", "fit_shape", "fit_shapes", "fit_separation", "fit_separations", "exact_iou_params"]
