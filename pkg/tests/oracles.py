"""Brute-force reference computations used only by the tests."""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from covering_lab.geometry import Box3


def raster_depth(boxes, lo: int, hi: int) -> np.ndarray:
    """Depth on the unit cells of ``[lo, hi)^3`` by direct painting."""
    n = hi - lo
    d = np.zeros((n, n, n), dtype=np.int32)
    for b in boxes:
        sl = []
        for iv in (b.x, b.y, b.z):
            a, c = max(iv.lo, lo) - lo, min(iv.hi, hi) - lo
            sl.append(slice(a, max(a, c)))
        d[tuple(sl)] += 1
    return d


def raster_union(boxes, lo: int = 0, hi: int = 32) -> int:
    return int((raster_depth(boxes, lo, hi) > 0).sum())


def raster_hist(region: Box3, gens, lo: int = 0, hi: int = 32) -> dict[int, int]:
    d = raster_depth(gens, lo, hi)
    r = region
    sub = d[r.x.lo - lo : r.x.hi - lo, r.y.lo - lo : r.y.hi - lo, r.z.lo - lo : r.z.hi - lo]
    ks, cs = np.unique(sub, return_counts=True)
    return {int(k): int(c) for k, c in zip(ks, cs)}


def raster_joint(region: Box3, c1, c2, lo: int = 0, hi: int = 32) -> dict[tuple[int, int], int]:
    d1 = raster_depth(c1, lo, hi)
    d2 = raster_depth(c2, lo, hi)
    r = region
    sl = (slice(r.x.lo - lo, r.x.hi - lo), slice(r.y.lo - lo, r.y.hi - lo), slice(r.z.lo - lo, r.z.hi - lo))
    out: dict[tuple[int, int], int] = {}
    for a, b in zip(d1[sl].ravel(), d2[sl].ravel()):
        out[(int(a), int(b))] = out.get((int(a), int(b)), 0) + 1
    return out


def brute_maximal_line(vals, widths) -> list[Fraction]:
    """Max average over every breakpoint segment containing each cell, by triple loop."""
    g = len(vals)
    X = [0]
    for w in widths:
        X.append(X[-1] + int(w))
    out = []
    for i in range(g):
        best = None
        for a in range(i + 1):
            for b in range(i + 1, g + 1):
                s = sum(Fraction(vals[t]) * int(widths[t]) for t in range(a, b))
                v = s / (X[b] - X[a])
                if best is None or v > best:
                    best = v
        out.append(best)
    return out


def brute_maximal(values: np.ndarray, widths3, axis: int) -> np.ndarray:
    ax = axis - 1
    v = np.moveaxis(values, ax, -1)
    out = np.empty(v.shape, dtype=object)
    for idx in np.ndindex(v.shape[:-1]):
        out[idx] = brute_maximal_line(list(v[idx]), list(widths3[ax]))
    return np.moveaxis(out, -1, ax)


def random_box(rng: np.random.Generator, lo: int = 0, hi: int = 32, max_len: int | None = None) -> Box3:
    bounds = []
    for _ in range(3):
        a, b = sorted(rng.choice(np.arange(lo, hi + 1), size=2, replace=False).tolist())
        if max_len is not None and b - a > max_len:
            b = a + int(rng.integers(1, max_len + 1))
        bounds.append((a, b))
    return Box3.from_bounds(*bounds)
