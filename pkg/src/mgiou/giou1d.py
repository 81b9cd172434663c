"""One-dimensional GIoU between projection intervals.

``giou1d_simplified`` is the closed form used by every loss in the package::

    (min(b, d) - max(a, c)) / (max(b, d) - min(a, c))

for ``P = [a, b]`` and ``G = [c, d]``. ``giou1d_definition`` spells out
intersection, union and enclosure separately and serves as its oracle.

When the enclosing interval has length ``<= DEGENERATE_ENCLOSURE`` (two
identical point-intervals) both forms return 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import MGIoUError

DEGENERATE_ENCLOSURE = 1e-15


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise MGIoUError(f"interval endpoints must be finite, got [{self.lo}, {self.hi}]")
        if self.hi < self.lo:
            raise MGIoUError(f"interval has hi < lo: [{self.lo}, {self.hi}]")

    @property
    def length(self) -> float:
        return self.hi - self.lo

    def shifted(self, t: float) -> "Interval":
        return Interval(self.lo + t, self.hi + t)

    def scaled(self, s: float) -> "Interval":
        return Interval(self.lo * s, self.hi * s)


@dataclass(frozen=True)
class Giou1dBreakdown:
    intersection: float
    union: float
    enclosure: float
    iou: float
    giou: float


def giou1d_simplified(p: Interval, g: Interval) -> float:
    num = min(p.hi, g.hi) - max(p.lo, g.lo)
    den = max(p.hi, g.hi) - min(p.lo, g.lo)
    if den <= DEGENERATE_ENCLOSURE:
        return 1.0
    return num / den


def giou1d_definition(p: Interval, g: Interval) -> Giou1dBreakdown:
    """Textbook GIoU on intervals: ``IoU - |C minus (P union G)| / |C|``.

    Two distinct point-intervals have zero union; their IoU is taken as 0,
    which gives GIoU = -1, the same value as the closed form.
    """
    inter = max(0.0, min(p.hi, g.hi) - max(p.lo, g.lo))
    union = p.length + g.length - inter
    enclosure = max(p.hi, g.hi) - min(p.lo, g.lo)
    if enclosure <= DEGENERATE_ENCLOSURE:
        return Giou1dBreakdown(inter, union, enclosure, 1.0, 1.0)
    iou = inter / union if union > 0 else 0.0
    return Giou1dBreakdown(inter, union, enclosure, iou, iou - (enclosure - union) / enclosure)


# ----------------------------------------------------------------------------
# array versions


def giou1d_simplified_array(a, b, c, d) -> np.ndarray:
    """Elementwise closed form over arrays of endpoints ``P=[a,b]``, ``G=[c,d]``."""
    a, b, c, d = (np.asarray(x, dtype=float) for x in (a, b, c, d))
    num = np.minimum(b, d) - np.maximum(a, c)
    den = np.maximum(b, d) - np.minimum(a, c)
    ok = den > DEGENERATE_ENCLOSURE
    return np.where(ok, num / np.where(ok, den, 1.0), 1.0)


def giou1d_definition_array(a, b, c, d) -> np.ndarray:
    a, b, c, d = (np.asarray(x, dtype=float) for x in (a, b, c, d))
    inter = np.maximum(0.0, np.minimum(b, d) - np.maximum(a, c))
    union = (b - a) + (d - c) - inter
    enclosure = np.maximum(b, d) - np.minimum(a, c)
    iou = np.where(union > 0, inter / np.where(union > 0, union, 1.0), 0.0)
    ok = enclosure > DEGENERATE_ENCLOSURE
    safe = np.where(ok, enclosure, 1.0)
    return np.where(ok, iou - (enclosure - union) / safe, 1.0)


def giou1d_vjp(a, b, c, d, g_out):
    """Gradient of the closed form w.r.t. ``(a, b, c, d)``.

    Ties inside ``min``/``max`` go to the first argument (the ``P`` interval);
    the degenerate-enclosure branch is constant.
    """
    num = np.minimum(b, d) - np.maximum(a, c)
    den = np.maximum(b, d) - np.minimum(a, c)
    ok = den > DEGENERATE_ENCLOSURE
    safe = np.where(ok, den, 1.0)
    g_num = np.where(ok, g_out / safe, 0.0)
    g_den = np.where(ok, -g_out * num / (safe * safe), 0.0)
    min_hi_p = b <= d
    max_hi_p = b >= d
    max_lo_p = a >= c
    min_lo_p = a <= c
    g_b = g_num * min_hi_p + g_den * max_hi_p
    g_d = g_num * ~min_hi_p + g_den * ~max_hi_p
    g_a = -g_num * max_lo_p - g_den * min_lo_p
    g_c = -g_num * ~max_lo_p - g_den * ~min_lo_p
    return g_a, g_b, g_c, g_d
