"""Latency comparison between batched MGIoU and the exact clipping oracle.

Both sides receive the same pairs. The oracle is handed precomputed vertex
lists so its timing covers clipping and hull construction only; MGIoU starts
from shape parameters (rects) or vertex arrays (polygons).
"""

from __future__ import annotations

import math
import statistics
import time
import warnings
from dataclasses import dataclass

import numpy as np

from . import oracle
from .gen import near_rect_pairs, random_ngon
from .kernels import rect_corners
from .losses import mgiou_eval

SHAPES = ("rect", "polygon")
MIN_PAIRS = 1000
POLYGON_VERTICES = 6


@dataclass(frozen=True)
class BenchRow:
    method: str
    pairs: int
    median_ms: float
    per_pair_us: float


@dataclass(frozen=True)
class BenchResult:
    shape: str
    pairs: int
    repeat: int
    rows: tuple
    speedup: float  # oracle median / batched MGIoU median

    def to_csv(self, header_lines=()) -> str:
        lines = [f"# {h}" for h in header_lines]
        lines.append("method,pairs,median_ms,per_pair_us")
        lines += [f"{r.method},{r.pairs},{r.median_ms:.6g},{r.per_pair_us:.6g}" for r in self.rows]
        lines.append(f"speedup,{self.pairs},{self.speedup:.6g},")
        return "\n".join(lines) + "\n"


def bench_pairs(shape: str, n: int, seed: int = 0):
    """``(kind, p_params, g_params, p_vertices, g_vertices)`` for ``n`` pairs."""
    rng = np.random.default_rng(seed)
    if shape == "rect":
        p, g = near_rect_pairs(rng, n)
        return "rect", p, g, rect_corners(p), rect_corners(g)
    if shape == "polygon":
        pv = random_ngon(rng, n, POLYGON_VERTICES)
        gv = random_ngon(rng, n, POLYGON_VERTICES)
        return "polygon", pv.reshape(n, -1), gv.reshape(n, -1), pv, gv
    raise ValueError(f"unknown bench shape {shape!r}; expected one of {SHAPES}")


def _median_ms(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return 1e3 * statistics.median(times)


def run_bench(pairs: int = 10_000, shape: str = "rect", repeat: int = 5, seed: int = 0, per_pair_loop: bool = True) -> BenchResult:
    """Median-of-``repeat`` wall times; ``speedup`` is oracle over batched MGIoU."""
    if pairs < 1 or repeat < 1:
        raise ValueError("pairs and repeat must be >= 1")
    if pairs < MIN_PAIRS:
        warnings.warn(f"{pairs} pairs is below {MIN_PAIRS}; timings will be noisy", stacklevel=2)
    kind, pp, pg, pv, gv = bench_pairs(shape, pairs, seed)
    p_pts = [[(float(x), float(y)) for x, y in v] for v in pv]
    g_pts = [[(float(x), float(y)) for x, y in v] for v in gv]

    def batched():
        mgiou_eval(kind, pp, kind, pg)

    def loop():
        for k in range(pairs):
            mgiou_eval(kind, pp[k : k + 1], kind, pg[k : k + 1])

    def exact():
        for a, b in zip(p_pts, g_pts):
            oracle.exact_giou_2d(a, b)

    timed = [("mgiou_batched", batched), ("exact_giou_oracle", exact)]
    if per_pair_loop:
        timed.append(("mgiou_per_pair", loop))
    rows = []
    for name, fn in timed:
        ms = _median_ms(fn, repeat)
        rows.append(BenchRow(name, pairs, ms, 1e3 * ms / pairs))
    speedup = rows[1].median_ms / rows[0].median_ms if rows[0].median_ms > 0 else math.inf
    return BenchResult(shape, pairs, repeat, tuple(rows), speedup)


__all__ = ["BenchResult", "BenchRow", "SHAPES", "bench_pairs", "run_bench"]
