"""Randomised property suites with worst-case witnesses.

Each suite draws its inputs from a seeded generator and returns an
:class:`AuditReport`. A check passes when its violation count is at most
``allowed`` (zero for the exact properties; a small failure budget for the
optimisation suites).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import gen, oracle
from .errors import KinkDetected
from .fit import FitConfig, fit_separations, fit_shapes
from .giou1d import giou1d_definition_array, giou1d_simplified_array
from .grad import check_grad
from .kernels import STATES, merge_normals, rect_corners
from .losses import MgiouConfig, convexity_eval, mgiou_eval
from .shapes import Polygon, RotatedRect

SUITES = ("metric", "equivalence", "gradient", "correlation", "convexity", "separation", "fit")

DEFAULT_TRIALS = {
    "metric": 10_000,
    "equivalence": 1_000_000,
    "gradient": 100,
    "correlation": 10_000,
    "convexity": 10_000,
    "separation": 100,
    "fit": 100,
}

EQUIV_TOL = 1e-12
IDENTITY_TOL = 1e-12
SYMMETRY_TOL = 1e-12
SCALE_TOL = 1e-10
TRIANGLE_SLACK = 1e-10
GRAD_TOL = 1e-4
MIN_PEARSON = 0.8
CONVEX_TOL = 1e-6
RESTORE_CASES = 100
RESTORE_STEPS = 500
FIT_IOU = 0.99
SCALES = (1e-3, 1.0, 1e3)


@dataclass
class Check:
    name: str
    trials: int
    violations: int
    worst: float
    tolerance: float
    witness: dict | None = None
    allowed: int = 0
    note: str = ""

    @property
    def passed(self) -> bool:
        return self.violations <= self.allowed

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        budget = f" (allowed {self.allowed})" if self.allowed else ""
        text = f"{status} {self.name}: {self.violations}/{self.trials} violations{budget}, worst {self.worst:.6g}"
        text += f" vs {self.tolerance:g}"
        return text + (f"; {self.note}" if self.note else "")


@dataclass
class AuditReport:
    suite: str
    seed: int
    trials: int
    checks: list = field(default_factory=list)
    measured: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def lines(self) -> list:
        out = [f"suite {self.suite} (trials {self.trials}, seed {self.seed})"]
        out += ["  " + c.line() for c in self.checks]
        out += [f"  measured {k} = {v:.6g}" if isinstance(v, float) else f"  measured {k} = {v}" for k, v in self.measured.items()]
        for c in self.checks:
            if c.witness is not None and (not c.passed or c.violations):
                out.append(f"  witness {c.name}: {c.witness}")
        return out

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        for c, cd in zip(self.checks, d["checks"]):
            cd["passed"] = c.passed
        return d


def _rect_dict(p) -> dict:
    return RotatedRect(*(float(v) for v in p)).to_dict()


def _loss(pp, pg, dirs=None) -> np.ndarray:
    return mgiou_eval("rect", pp, "rect", pg, dirs)[1]


def _same_point_sets(p: np.ndarray, g: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    vp, vg = rect_corners(p), rect_corners(g)
    d = np.linalg.norm(vp[:, :, None, :] - vg[:, None, :, :], axis=-1)
    return (d.min(axis=2).max(axis=1) <= tol) & (d.min(axis=1).max(axis=1) <= tol)


def _worst(values: np.ndarray, bad: np.ndarray, witness_of) -> tuple:
    k = int(np.argmax(values))
    return float(values[k]), witness_of(k), int(np.count_nonzero(bad))


# ----------------------------------------------------------------------------
# suites


def audit_equivalence(trials: int, seed: int = 0) -> AuditReport:
    """Simplified 1D GIoU against the textbook definition on random intervals
    with endpoints uniform in ``[-10, 10]``."""
    rng = np.random.default_rng(seed)
    e = np.sort(rng.uniform(-10.0, 10.0, (2, 2, trials)), axis=1)
    a, b, c, d = e[0, 0], e[0, 1], e[1, 0], e[1, 1]
    simp = giou1d_simplified_array(a, b, c, d)
    defn = giou1d_definition_array(a, b, c, d)
    diff = np.abs(simp - defn)
    asym = np.abs(simp - giou1d_simplified_array(c, d, a, b))

    def wit(k):
        return {"p": [float(a[k]), float(b[k])], "g": [float(c[k]), float(d[k])]}

    report = AuditReport("equivalence", seed, trials)
    w, x, n = _worst(diff, diff > EQUIV_TOL, wit)
    report.checks.append(Check("simplified_vs_definition", trials, n, w, EQUIV_TOL, x))
    w, x, n = _worst(asym, asym > 0.0, wit)
    report.checks.append(Check("symmetry", trials, n, w, 0.0, x))
    w, x, n = _worst(np.abs(simp), (simp > 1.0) | (simp <= -1.0), wit)
    report.checks.append(Check("range", trials, n, w, 1.0, x, note="giou in (-1, 1]"))
    report.measured["max_abs_difference"] = float(diff.max())
    return report


def _identity_pairs(rng, n):
    """A third exact re-parameterisations, a third tiny perturbations, a third
    independent pairs."""
    p, g = gen.near_rect_pairs(rng, n)
    k = n // 3
    alt = p[:k].copy()
    swap = rng.uniform(size=k) < 0.5
    alt[swap, 2], alt[swap, 3] = p[:k][swap, 3], p[:k][swap, 2]
    alt[swap, 4] += math.pi / 2
    alt[~swap, 4] += math.pi * rng.integers(0, 2, np.count_nonzero(~swap))
    g[:k] = alt
    pert = p[k : 2 * k].copy()
    col = rng.integers(0, 5, k)
    pert[np.arange(k), col] += 1e-6 * rng.choice((-1.0, 1.0), k)
    g[k : 2 * k] = pert
    return p, g


def audit_metric(trials: int, seed: int = 0) -> AuditReport:
    """Non-negativity, identity, symmetry, scale invariance, range and the
    triangle inequality (on a fixed shared normal set) over random rects."""
    rng = np.random.default_rng(seed)
    report = AuditReport("metric", seed, trials)
    p, g = gen.near_rect_pairs(rng, trials)
    loss = _loss(p, g)

    def pair_wit(pp, pg):
        return lambda k: {"p": _rect_dict(pp[k]), "g": _rect_dict(pg[k])}

    w, x, n = _worst(-loss, loss < 0.0, pair_wit(p, g))
    report.checks.append(Check("non_negativity", trials, n, w, 0.0, x, note="worst is -min(loss)"))

    mg = 1.0 - 2.0 * loss
    bad = (mg > 1.0) | (mg <= -1.0) | (loss >= 1.0)
    w, x, n = _worst(np.abs(mg), bad, pair_wit(p, g))
    report.checks.append(Check("range", trials, n, w, 1.0, x, note="mgiou in (-1, 1], loss in [0, 1)"))

    rev = _loss(g, p)
    asym = np.abs(loss - rev)
    w, x, n = _worst(asym, asym > SYMMETRY_TOL, pair_wit(p, g))
    report.checks.append(Check("symmetry", trials, n, w, SYMMETRY_TOL, x))

    ip, ig = _identity_pairs(rng, trials)
    il = _loss(ip, ig)
    same = _same_point_sets(ip, ig)
    mismatch = (il <= IDENTITY_TOL) != same
    score = np.where(same, il, IDENTITY_TOL - il)
    w, x, n = _worst(np.where(mismatch, np.abs(score), 0.0), mismatch, pair_wit(ip, ig))
    report.checks.append(
        Check("identity", trials, n, w, IDENTITY_TOL, x, note=f"{int(same.sum())} equal point sets")
    )

    worst_scale, scale_wit, scale_bad = 0.0, None, 0
    for s in SCALES:
        sp, sg = p.copy(), g.copy()
        sp[:, :4] *= s
        sg[:, :4] *= s
        dev = np.abs(_loss(sp, sg) - loss)
        w, x, n = _worst(dev, dev > SCALE_TOL, pair_wit(p, g))
        scale_bad += n
        if w >= worst_scale:
            worst_scale, scale_wit = w, dict(x, scale=s)
    report.checks.append(Check("scale_invariance", trials * len(SCALES), scale_bad, worst_scale, SCALE_TOL, scale_wit))

    q = p.copy()
    q[:, :2] = gen.near_offsets(rng, np.hypot(p[:, 2], p[:, 3]))
    q[:, 2:] = gen.rect_params(rng, trials, 0.0)[:, 2:]
    r = g
    cand = np.concatenate([STATES["rect"](x).normals() for x in (p, q, r)], axis=1)
    dirs, valid, _ = merge_normals(cand)
    dirs = np.where(valid[..., None], dirs, 0.0)
    lpr, lpq, lqr = _loss(p, r, dirs), _loss(p, q, dirs), _loss(q, r, dirs)
    excess = lpr - lpq - lqr

    def tri_wit(k):
        return {"p": _rect_dict(p[k]), "q": _rect_dict(q[k]), "r": _rect_dict(r[k])}

    w, x, n = _worst(excess, excess > TRIANGLE_SLACK, tri_wit)
    report.checks.append(
        Check("triangle_fixed_normals", trials, n, w, TRIANGLE_SLACK, x, note="worst is max L(p,r) - L(p,q) - L(q,r)")
    )
    return report


def _random_polygon_pair(rng):
    g = gen.random_hull(rng)
    p = gen.random_hull(rng)
    while len(p) > len(g):
        p = gen.random_hull(rng)
    return Polygon(p + rng.normal(0.0, 0.3, 2)), Polygon(g)


def _random_box_pair(rng):
    p, g = gen.near_rect_pairs(rng, 1)
    return rect_corners(p)[0], rect_corners(g)[0]


def audit_gradient(trials: int, seed: int = 0) -> AuditReport:
    """``check_grad`` on random instances of MGIoU (rect pairs), MGIoU+
    (polygon pairs, lambda = 1) and the MGIoU- pair penalty."""
    rng = np.random.default_rng(seed)
    report = AuditReport("gradient", seed, trials)
    cases = {
        "mgiou": lambda: tuple(RotatedRect(*x[0]) for x in gen.near_rect_pairs(rng, 1)),
        "mgiou_plus": lambda: _random_polygon_pair(rng),
        "mgiou_minus_pair": lambda: _random_box_pair(rng),
    }
    cfg = MgiouConfig(lam=1.0, mode="unstructured")
    for loss_id, draw in cases.items():
        errs, worst_wit, kinks = [], None, 0
        for i in range(trials):
            inputs = draw()
            try:
                err = check_grad(loss_id, *inputs, cfg=cfg if loss_id == "mgiou_plus" else None, seed=i)
            except KinkDetected:
                err, kinks = math.inf, kinks + 1
            if not errs or err > max(errs):
                worst_wit = {"inputs": [_json_input(v) for v in inputs]}
            errs.append(err)
        errs = np.array(errs)
        note = f"{kinks} unresolved kinks" if kinks else ""
        report.checks.append(
            Check(f"{loss_id}_max_rel_error", trials, int((errs >= GRAD_TOL).sum()), float(errs.max()), GRAD_TOL, worst_wit, note=note)
        )
    return report


def _json_input(v):
    if hasattr(v, "to_dict"):
        return v.to_dict()
    return np.asarray(v).tolist()


def _exact_ious(p, g) -> np.ndarray:
    vp, vg = rect_corners(p), rect_corners(g)
    return np.array([oracle.exact_giou_2d(vp[i], vg[i]).iou for i in range(len(p))])


def pearson_near_pairs(trials: int, seed: int = 0, area_uniform: bool = False):
    """Pearson r between MGIoU and exact IoU on near rect pairs, plus the
    arrays it was computed from."""
    rng = np.random.default_rng(seed)
    p, g = gen.near_rect_pairs(rng, trials)
    if area_uniform:
        # same directions, distances redrawn so centres are uniform over the disc
        diag = np.hypot(g[:, 2], g[:, 3])
        scale = gen.NEAR_DIAGONALS * diag * np.sqrt(rng.uniform(size=trials))
        norm = np.maximum(np.hypot(p[:, 0], p[:, 1]), 1e-300)
        p[:, :2] *= (scale / norm)[:, None]
    mg = 1.0 - 2.0 * _loss(p, g)
    iou = _exact_ious(p, g)
    return float(np.corrcoef(mg, iou)[0, 1]), p, g, mg, iou


def audit_correlation(trials: int, seed: int = 0) -> AuditReport:
    """Pearson correlation of MGIoU with exact IoU over rect pairs whose centre
    distance is uniform in ``[0, 2]`` target diagonals."""
    report = AuditReport("correlation", seed, trials)
    r, p, g, mg, iou = pearson_near_pairs(trials, seed)
    z = np.abs((mg - mg.mean()) / mg.std() - (iou - iou.mean()) / iou.std())
    k = int(np.argmax(z))
    wit = {"p": _rect_dict(p[k]), "g": _rect_dict(g[k]), "mgiou": float(mg[k]), "iou": float(iou[k])}
    report.checks.append(
        Check("pearson_r", 1, int(r < MIN_PEARSON), r, MIN_PEARSON, wit, note="worst is the measured r (must be >= tolerance)")
    )
    report.measured["pearson_r"] = r
    report.measured["pearson_r_overlapping_only"] = float(np.corrcoef(mg[iou > 0], iou[iou > 0])[0, 1])
    report.measured["pearson_r_area_uniform_centres"] = pearson_near_pairs(trials, seed, area_uniform=True)[0]
    report.measured["overlapping_fraction"] = float((iou > 0).mean())
    return report


def restoration_cases(n: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    return [gen.reflected_hull(rng) for _ in range(n)]


def restore_convexity(cases, steps: int = RESTORE_STEPS, lam: float = 1.0):
    """MGIoU+ descent from each reflected polygon towards its hull. Returns the
    traces and, per case, the first step with convexity < 1e-6 (or None)."""
    traces = fit_shapes(
        [Polygon(r) for _, r in cases], [Polygon(h) for h, _ in cases], FitConfig(steps=steps, lam=lam)
    )
    first = [next((i for i, c in enumerate(t.convexity) if c < CONVEX_TOL), None) for t in traces]
    return traces, first


def audit_convexity(trials: int, seed: int = 0) -> AuditReport:
    """The regularizer is zero on random hulls, positive once a vertex is
    reflected inward, and MGIoU+ descent (lambda = 1) removes the reflex angle
    within 500 steps."""
    rng = np.random.default_rng(seed)
    report = AuditReport("convexity", seed, trials)
    pairs = [gen.reflected_hull(rng) for _ in range(trials)]
    hulls = [h for h, _ in pairs]
    refl = [r for _, r in pairs]
    zero = np.array([convexity_eval(h[None])[0][0] for h in hulls])
    pos = np.array([convexity_eval(r[None])[0][0] for r in refl])
    k = int(np.argmax(zero))
    report.checks.append(Check("zero_on_hulls", trials, int((zero != 0).sum()), float(zero.max()), 0.0, {"vertices": hulls[k].tolist()}))
    k = int(np.argmin(pos))
    report.checks.append(
        Check("positive_on_reflected", trials, int((pos <= 0).sum()), float(pos.min()), 0.0, {"vertices": refl[k].tolist()}, note="worst is the smallest value")
    )
    n = min(RESTORE_CASES, trials)
    traces, first = restore_convexity(pairs[:n])
    failed = [i for i, f in enumerate(first) if f is None]
    final = np.array([t.convexity[-1] for t in traces])
    wit, worst = None, 0.0
    if failed:
        k = max(failed, key=lambda i: min(traces[i].convexity))
        wit = {"init": refl[k].tolist(), "target": hulls[k].tolist()}
        worst = min(traces[k].convexity)
    report.checks.append(
        Check("restored_within_500_steps", n, len(failed), worst, CONVEX_TOL, wit, note="worst is the lowest convexity a failed case reached")
    )
    report.measured["restored_at_some_step"] = n - len(failed)
    report.measured["convex_at_final_step"] = int((final < CONVEX_TOL).sum())
    reached = [f for f in first if f is not None]
    if reached:
        report.measured["slowest_restoration_step"] = max(reached)
    return report


def separation_cases(n: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    return [gen.overlapping_batch(rng) for _ in range(n)]


def audit_separation(trials: int, seed: int = 0, cases=None) -> AuditReport:
    """``fit_separation`` on overlapping two-agent batches: the collision count
    should reach 0 (4% failure budget) and must never end above its start."""
    batches = cases if cases is not None else separation_cases(trials, seed)
    report = AuditReport("separation", seed, len(batches))
    traces = fit_separations(batches, FitConfig())
    start = np.array([t.metric[0] for t in traces])
    end = np.array([t.metric[-1] for t in traces])
    reached = np.array([0 in t.metric for t in traces])
    fail = np.flatnonzero(~reached)
    wit = {"batch": batches[fail[0]].to_dict()} if len(fail) else None
    report.checks.append(
        Check("collisions_reach_zero", len(batches), len(fail), float(end.max()), 0.0, wit, allowed=int(0.04 * len(batches)))
    )
    up = np.flatnonzero(end > start)
    wit = {"batch": batches[up[0]].to_dict()} if len(up) else None
    report.checks.append(Check("never_increase", len(batches), len(up), float((end - start).max()), 0.0, wit))
    report.measured["reached_zero"] = int(reached.sum())
    report.measured["final_loss_median"] = float(np.median([t.losses[-1] for t in traces]))
    return report


def fit_cases(n: int, seed: int = 0):
    p, g = gen.near_rect_pairs(np.random.default_rng(seed), n)
    return [RotatedRect(*x) for x in p], [RotatedRect(*x) for x in g]


def audit_fit(trials: int, seed: int = 0) -> AuditReport:
    """Rect-to-rect fits from inits within 2 diagonals reach exact IoU >= 0.99
    in 2000 steps (5% failure budget)."""
    report = AuditReport("fit", seed, trials)
    inits, targets = fit_cases(trials, seed)
    traces = fit_shapes(inits, targets, FitConfig())
    final = np.array([t.metric[-1] for t in traces])
    bad = np.flatnonzero(final < FIT_IOU)
    k = int(np.argmin(final))
    wit = {"init": inits[k].to_dict(), "target": targets[k].to_dict(), "final_iou": float(final[k])}
    report.checks.append(
        Check("final_iou_at_least_0.99", trials, len(bad), float(final.min()), FIT_IOU, wit, allowed=int(0.05 * trials), note="worst is the lowest final IoU")
    )
    report.measured["median_final_iou"] = float(np.median(final))
    report.measured["median_steps"] = float(np.median([t.steps_run for t in traces]))
    return report


RUNNERS = {
    "metric": audit_metric,
    "equivalence": audit_equivalence,
    "gradient": audit_gradient,
    "correlation": audit_correlation,
    "convexity": audit_convexity,
    "separation": audit_separation,
    "fit": audit_fit,
}


def run_suite(suite: str, trials: int | None = None, seed: int = 0) -> AuditReport:
    if suite not in RUNNERS:
        raise ValueError(f"unknown suite {suite!r}; expected one of {SUITES}")
    return RUNNERS[suite](trials or DEFAULT_TRIALS[suite], seed)


__all__ = ["AuditReport", "Check", "SUITES", "DEFAULT_TRIALS", "run_suite", "pearson_near_pairs"] + [
    f"audit_{s}" for s in SUITES
]
