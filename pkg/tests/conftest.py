"""Shared fixtures, hypothesis strategies and a slow pure-Python reference."""

import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from mgiou import RotatedRect
from mgiou.kernels import rect_corners

settings.register_profile("repo", max_examples=200, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")

coord = st.floats(-10.0, 10.0, allow_nan=False)
size = st.floats(0.1, 5.0, allow_nan=False)
angle = st.floats(-math.pi, math.pi, allow_nan=False)


@st.composite
def rects(draw, center=coord):
    return RotatedRect(draw(center), draw(center), draw(size), draw(size), draw(angle))


@st.composite
def convex_polygons(draw, min_vertices=3, max_vertices=9):
    """Points on a circle at sorted, well separated angles (always convex)."""
    k = draw(st.integers(min_vertices, max_vertices))
    jitter = draw(st.lists(st.floats(0.0, 0.7), min_size=k, max_size=k))
    phase = draw(angle)
    r = draw(size)
    cx, cy = draw(coord), draw(coord)
    t = [phase + 2 * math.pi * (i + jitter[i]) / k for i in range(k)]
    return np.array([[cx + r * math.cos(a), cy + r * math.sin(a)] for a in t])


def square(x0=0.0, y0=0.0, s=1.0):
    """Axis-aligned square with its lower-left corner at ``(x0, y0)``."""
    return RotatedRect(x0 + s / 2, y0 + s / 2, s, s, 0.0)


def square_vertices(x0=0.0, y0=0.0, s=1.0):
    return rect_corners(np.array([[x0 + s / 2, y0 + s / 2, s, s, 0.0]]))[0]


# ----------------------------------------------------------------------------
# reference: direct loops over edges, no batching, no shared code with the package


def ref_edge_normals(verts):
    out = []
    n = len(verts)
    for i in range(n):
        ex = verts[(i + 1) % n][0] - verts[i][0]
        ey = verts[(i + 1) % n][1] - verts[i][1]
        length = math.hypot(ex, ey)
        out.append((-ey / length, ex / length))
    return out


def ref_canonical(a):
    lead = next((c for c in a if abs(c) > 1e-12), 1.0)
    return tuple(c if lead > 0 else -c for c in a)


def ref_unique(normals, tol=1e-9):
    """Greedy clustering in input order; each cluster is represented by its
    lexicographically largest canonical-sign member."""
    seeds, clusters = [], []
    for a in normals:
        for k, b in enumerate(seeds):
            if abs(sum(x * y for x, y in zip(a, b))) > 1 - tol:
                clusters[k].append(a)
                break
        else:
            seeds.append(a)
            clusters.append([a])
    return [max(ref_canonical(a) for a in members) for members in clusters]


def ref_giou1d(a, b, c, d):
    inter = max(0.0, min(b, d) - max(a, c))
    union = (b - a) + (d - c) - inter
    hull = max(b, d) - min(a, c)
    iou = inter / union if union > 0 else 0.0
    return iou - (hull - union) / hull


def ref_mgiou(pv, gv):
    """MGIoU of two 2D vertex loops on the deduplicated union of edge normals."""
    normals = ref_unique(ref_edge_normals(pv) + ref_edge_normals(gv))
    vals = []
    for nx, ny in normals:
        pp = [x * nx + y * ny for x, y in pv]
        gp = [x * nx + y * ny for x, y in gv]
        vals.append(ref_giou1d(min(pp), max(pp), min(gp), max(gp)))
    return sum(vals) / len(vals)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# ----------------------------------------------------------------------------
# acceptance summary: one line per criterion, printed after the run

ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("-", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
