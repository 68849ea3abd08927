"""One-dimensional uncentered maximal operators on piecewise-constant fields.

Fields live on a :class:`Grid3` and vanish outside its hull.  Averages are
taken over segments whose endpoints are grid breakpoints; for piecewise-constant
data this attains the supremum over all segments containing a cell.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .geometry import Box3, BoxFamily, boxes_to_array, dilate
from .measure import Grid3, clip_array, depth_field
from .selection import SelectionResult

MAX_STRONG_GRID = 48


@dataclass(frozen=True, eq=False)
class ScalarField3:
    """Nonnegative per-cell values; ``values`` is float64 or an object array of Fractions/ints."""

    grid: Grid3
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != self.grid.shape:
            raise ValueError(f"values shape {self.values.shape} != grid shape {self.grid.shape}")

    @property
    def exact(self) -> bool:
        return self.values.dtype == object

    def integral(self):
        vol = self.grid.cell_volumes()
        if self.exact:
            return sum((v * int(w) for v, w in zip(self.values.ravel(), vol.ravel())), Fraction(0))
        return math.fsum((self.values * vol).ravel())


def exp_field(grid: Grid3, depth: np.ndarray, c: float = 1.0) -> ScalarField3:
    """``exp(c * depth)`` on covered cells, zero where depth is 0."""
    vals = np.where(depth > 0, np.exp(c * depth.astype(np.float64)), 0.0)
    return ScalarField3(grid, vals)


@dataclass(frozen=True, eq=False)
class MaximalField:
    grid: Grid3
    axis: int
    values: np.ndarray


def _axis_index(axis: int) -> int:
    if axis not in (1, 2, 3):
        raise ValueError(f"axis must be 1, 2 or 3, got {axis}")
    return axis - 1


def _maximal_lines_exact(vals: np.ndarray, widths: Sequence[int]) -> np.ndarray:
    L, g = vals.shape
    X = [0]
    for w in widths:
        X.append(X[-1] + int(w))
    out = np.empty((L, g), dtype=object)
    for li in range(L):
        P = [Fraction(0)]
        for t in range(g):
            P.append(P[-1] + Fraction(vals[li, t]) * int(widths[t]))
        # best[a][i]: max over b > i of the average on [a, b]
        best_from = [None] * g
        for a in range(g):
            row = [None] * (g + 1)
            run = None
            for b in range(g, a, -1):
                v = (P[b] - P[a]) / (X[b] - X[a])
                run = v if run is None or v > run else run
                row[b] = run
            best_from[a] = row
        for i in range(g):
            out[li, i] = max(best_from[a][i + 1] for a in range(i + 1))
    return out


def _maximal_lines_float(vals: np.ndarray, widths: np.ndarray, chunk_cells: int = 1 << 22) -> np.ndarray:
    L, g = vals.shape
    X = np.concatenate([[0.0], np.cumsum(widths, dtype=np.float64)])
    span = X[None, :] - X[:, None]  # span[a, b]
    valid = span > 0
    out = np.empty((L, g), dtype=np.float64)
    step = max(1, chunk_cells // ((g + 1) ** 2))
    for l0 in range(0, L, step):
        v = vals[l0 : l0 + step]
        P = np.concatenate([np.zeros((len(v), 1)), np.cumsum(v * widths, axis=1)], axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            avg = (P[:, None, :] - P[:, :, None]) / span[None]
        avg = np.where(valid[None], avg, -np.inf)
        suf = np.maximum.accumulate(avg[:, :, ::-1], axis=2)[:, :, ::-1]
        T = np.maximum.accumulate(suf[:, :g, 1:], axis=1)
        out[l0 : l0 + step] = np.diagonal(T, axis1=1, axis2=2)
    return out


def hl_maximal_1d(f: ScalarField3, axis: int) -> MaximalField:
    """Uncentered maximal average along ``axis`` (1, 2 or 3) through every cell."""
    ax = _axis_index(axis)
    vals = np.moveaxis(f.values, ax, -1)
    shp = vals.shape
    lines = vals.reshape(-1, shp[-1])
    widths = f.grid.widths[ax]
    if f.exact:
        m = _maximal_lines_exact(lines, widths)
    else:
        m = _maximal_lines_float(lines.astype(np.float64), widths.astype(np.float64))
    return MaximalField(f.grid, axis, np.moveaxis(m.reshape(shp), -1, ax))


def level_set_measure(mf: MaximalField, lam: float, other: MaximalField | None = None) -> int:
    """Exact measure of ``{mf > lam}``, or of ``{mf > lam} | {other > lam}``."""
    mask = mf.values > lam
    if other is not None:
        if other.grid is not mf.grid and not all(
            np.array_equal(a, b) for a, b in zip((mf.grid.xs, mf.grid.ys, mf.grid.zs), (other.grid.xs, other.grid.ys, other.grid.zs))
        ):
            raise ValueError("maximal fields live on different grids")
        mask = mask | (other.values > lam)
    vol = mf.grid.cell_volumes()
    return int(vol[mask.astype(bool)].sum())


@dataclass
class WeakTypeReport:
    axis: int
    lam: float
    constant: float
    lhs: int
    integral: float
    rhs: float

    @property
    def ok(self) -> bool:
        return self.lhs <= self.rhs

    def to_json(self) -> dict:
        return {
            "ok": self.ok, "axis": self.axis, "lambda": self.lam, "constant": self.constant,
            "lhs": self.lhs, "integral": float(self.integral), "rhs": float(self.rhs),
        }


def weak_type_check(f: ScalarField3, axis: int, lam: float, constant: float = 5.0) -> WeakTypeReport:
    """Check ``m{M_axis f > lam} <= constant / lam * integral(f)``."""
    mf = hl_maximal_1d(f, axis)
    lhs = level_set_measure(mf, lam)
    ax = _axis_index(axis)
    # per-line integrals, then summed over the transverse cells
    w = f.grid.widths
    vals = f.values
    line = np.moveaxis(vals, ax, -1)
    wl = w[ax].astype(object) if f.exact else w[ax].astype(np.float64)
    per_line = (line * wl).sum(axis=-1)
    others = [w[i] for i in range(3) if i != ax]
    cross = (others[0][:, None] * others[1][None, :])
    if f.exact:
        integral = sum((Fraction(p) * int(cw) for p, cw in zip(per_line.ravel(), cross.ravel())), Fraction(0))
    else:
        integral = math.fsum((per_line * cross).ravel())
    rhs = constant / lam * float(integral) if not f.exact else Fraction(constant).limit_denominator() / Fraction(lam) * integral
    return WeakTypeReport(axis, lam, constant, lhs, integral, rhs)


# ---------------------------------------------------------------------------
# rejected-set inclusion

def _superlevel_lines(vals: np.ndarray, widths: np.ndarray, lam: float) -> np.ndarray:
    """Per cell along the last axis: does some breakpoint segment through it average above ``lam``?

    With ``H(t) = integral_0^t (f - lam)``, a segment ``[a, b]`` around cell ``i``
    qualifies iff ``H(b) - H(a) > 0``; so compare the max of ``H`` right of the
    cell with the min of ``H`` left of it.
    """
    H = np.concatenate([np.zeros(vals.shape[:-1] + (1,)), np.cumsum((vals - lam) * widths, axis=-1)], axis=-1)
    left_min = np.minimum.accumulate(H[..., :-1], axis=-1)
    right_max = np.maximum.accumulate(H[..., ::-1], axis=-1)[..., ::-1][..., 1:]
    return right_max > left_min


def _superlevel_lengths(vals: np.ndarray, widths: np.ndarray, lam: float) -> np.ndarray:
    """Per cell: length of the points whose maximal average over arbitrary real segments exceeds ``lam``.

    Inside a cell ``H`` is linear, so besides whole-cell hits a point ``t``
    qualifies iff ``H(t)`` is below the max of ``H`` at breakpoints to its right
    or above the min at breakpoints to its left.
    """
    H = np.concatenate([np.zeros(vals.shape[:-1] + (1,)), np.cumsum((vals - lam) * widths, axis=-1)], axis=-1)
    left_min = np.minimum.accumulate(H[..., :-1], axis=-1)
    right_max = np.maximum.accumulate(H[..., ::-1], axis=-1)[..., ::-1][..., 1:]
    h0, h1 = H[..., :-1], H[..., 1:]
    slope = vals - lam
    with np.errstate(divide="ignore", invalid="ignore"):
        part = np.where(
            slope < 0,
            ((h0 - left_min) + (right_max - h1)) / np.abs(slope),
            np.where((h0 > left_min) | (right_max > h1), np.inf, 0.0),
        )
    return np.where(right_max > left_min, widths, np.minimum(widths, part))


@dataclass
class InclusionReport:
    lam: float
    cells_checked: int = 0
    measure_checked: int = 0
    witness_axis1: int = 0
    witness_axis2_only: int = 0
    violating_cells: int = 0
    violating_measure: int = 0
    continuum_violating_measure: float = 0.0
    violations: list[dict] | None = None
    per_rejected: list[dict] | None = None

    @property
    def ok(self) -> bool:
        return self.violating_cells == 0

    def to_json(self) -> dict:
        return {
            "ok": self.ok,
            "lambda": self.lam,
            "cells_checked": self.cells_checked,
            "measure_checked": self.measure_checked,
            "witness_axis1": self.witness_axis1,
            "witness_axis2_only": self.witness_axis2_only,
            "violating_cells": self.violating_cells,
            "violating_measure": self.violating_measure,
            "continuum_violating_measure": self.continuum_violating_measure,
            "violations": self.violations or [],
            "per_rejected": self.per_rejected or [],
        }


def _in_range(v: np.ndarray, lo: int, hi: int) -> np.ndarray:
    return v[(v >= lo) & (v <= hi)]


def inclusion_for_box(
    R: Box3, dil: np.ndarray, lam: float, c: float = 1.0, continuum: bool = False
) -> tuple[np.ndarray, np.ndarray, Grid3]:
    """Witness masks for the two horizontal directions on the cells of ``R``.

    Returns ``(hit1, hit2, grid)`` where ``grid`` is the cell decomposition of
    ``R`` and ``hit_l`` marks cells where the axis-``l`` maximal function of the
    exp-field of ``dil`` exceeds ``lam``.  With ``continuum=True`` the masks are
    replaced by the per-cell length (along axis ``l``) of points whose maximal
    function over all real segments exceeds ``lam``.
    """
    line_fn = _superlevel_lengths if continuum else _superlevel_lines
    x0, x1, y0, y1, z0, z1 = R.bounds
    if len(dil):
        zover = (dil[:, 4] < z1) & (dil[:, 5] > z0)
        yover = (dil[:, 2] < y1) & (dil[:, 3] > y0)
        xover = (dil[:, 0] < x1) & (dil[:, 1] > x0)
        s1 = dil[zover & yover]
        s2 = dil[zover & xover]
    else:
        s1 = s2 = dil
    xs = np.unique(np.concatenate([[x0, x1], s1[:, 0:2].ravel(), _in_range(s2[:, 0:2].ravel(), x0, x1)]))
    ys = np.unique(np.concatenate([[y0, y1], s2[:, 2:4].ravel(), _in_range(s1[:, 2:4].ravel(), y0, y1)]))
    zs = np.unique(np.concatenate([[z0, z1], _in_range(np.concatenate([s1[:, 4:6].ravel(), s2[:, 4:6].ravel()]), z0, z1)]))
    ysR, xsR = _in_range(ys, y0, y1), _in_range(xs, x0, x1)
    ix = slice(int(np.searchsorted(xs, x0)), int(np.searchsorted(xs, x1)))
    iy = slice(int(np.searchsorted(ys, y0)), int(np.searchsorted(ys, y1)))

    hits = []
    for ax, (gx, gy, sub, sl) in enumerate(((xs, ysR, s1, ix), (xsR, ys, s2, iy))):
        grid = Grid3(gx, gy, zs)
        boxes = clip_array(sub, grid.hull.bounds)
        to_boxes = [Box3.from_bounds(b[0:2], b[2:4], b[4:6]) for b in boxes.tolist()]
        d = depth_field(to_boxes, grid).depth if to_boxes else np.zeros(grid.shape, dtype=np.int32)
        F = exp_field(grid, d, c).values
        line = np.moveaxis(F, ax, -1)
        w = grid.widths[ax].astype(np.float64)
        hit = np.moveaxis(line_fn(line, w, lam), -1, ax)
        hits.append(hit[sl, :, :] if ax == 0 else hit[:, sl, :])
    return hits[0], hits[1], Grid3(xsR, ysR, zs)


def rejected_inclusion_check(
    result: SelectionResult, f: BoxFamily, lam: float | None = None, max_listed: int = 20
) -> InclusionReport:
    """Check that every cell of every rejected box lies in the union of the
    superlevel sets ``{M_1 F > lam}`` and ``{M_2 F > lam}``, with ``F`` the
    exp-field of the selected dilated boxes."""
    thr = float(result.params.get("threshold", 3.0))
    dilation = int(result.params.get("dilation", 3))
    c = float(result.params.get("c", 1.0))
    if lam is None:
        lam = math.sqrt(thr) - 1.0
    dil = boxes_to_array([dilate(f.boxes[i], dilation) for i in result.selected])
    rep = InclusionReport(lam, violations=[], per_rejected=[])
    for idx in result.rejected:
        R = f.boxes[idx]
        h1, h2, g = inclusion_for_box(R, dil, lam, c)
        vol = g.cell_volumes()
        ok = h1 | h2
        bad = ~ok
        rep.cells_checked += ok.size
        rep.measure_checked += int(vol.sum())
        rep.witness_axis1 += int(h1.sum())
        rep.witness_axis2_only += int((h2 & ~h1).sum())
        nb = int(bad.sum())
        rep.violating_cells += nb
        bad_m = int(vol[bad].sum())
        rep.violating_measure += bad_m
        cont_bad = 0.0
        if nb:
            # cell-level misses can be partly covered once segment ends may leave breakpoints
            l1, l2, _ = inclusion_for_box(R, dil, lam, c, continuum=True)
            wx, wy, wz = (w.astype(np.float64) for w in g.widths)
            cont_bad = float(((wx[:, None, None] - l1) * (wy[None, :, None] - l2) * wz[None, None, :]).sum())
            rep.continuum_violating_measure += cont_bad
        rep.per_rejected.append({
            "index": idx, "cells": int(ok.size), "violating_cells": nb,
            "violating_measure": bad_m, "continuum_violating_measure": cont_bad,
        })
        for i, j, k in zip(*np.nonzero(bad)):
            if len(rep.violations) >= max_listed:
                break
            rep.violations.append({"rejected": idx, "cell": g.cell_box(i, j, k).to_json()})
    return rep


# ---------------------------------------------------------------------------
# two-dimensional strong maximal probe

@dataclass
class StrongMaximalReport:
    alpha: float
    superlevel: int
    orlicz: float
    ratio: float
    maximal: np.ndarray

    def to_json(self) -> dict:
        return {"alpha": self.alpha, "superlevel": self.superlevel, "orlicz": self.orlicz, "ratio": self.ratio}


def strong_maximal_2d(f: np.ndarray) -> np.ndarray:
    """Maximal average over all grid-aligned rectangles containing each unit cell."""
    f = np.asarray(f, dtype=np.float64)
    g1, g2 = f.shape
    if max(g1, g2) > MAX_STRONG_GRID:
        raise ValueError(f"grid {f.shape} exceeds {MAX_STRONG_GRID} per side")
    P = np.zeros((g1 + 1, g2 + 1))
    P[1:, 1:] = f.cumsum(0).cumsum(1)
    a1 = np.arange(g1 + 1)
    a2 = np.arange(g2 + 1)
    # S[a1, b1, a2, b2]
    S = P[None, :, None, :] - P[:, None, None, :] - P[None, :, :, None] + P[:, None, :, None]
    area = (a1[None, :] - a1[:, None])[:, :, None, None] * (a2[None, :] - a2[:, None])[None, None, :, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        A = np.where(area > 0, S / area, -np.inf)
    del S, area
    A = np.maximum.accumulate(A[:, ::-1], axis=1)[:, ::-1]
    A = np.maximum.accumulate(A[:, :, :, ::-1], axis=3)[:, :, :, ::-1]
    A = np.maximum.accumulate(A, axis=0)
    A = np.maximum.accumulate(A, axis=2)
    i = np.arange(g1)
    j = np.arange(g2)
    return A[i[:, None], i[:, None] + 1, j[None, :], j[None, :] + 1]


def strong_maximal_grid(f: np.ndarray, alpha: float) -> StrongMaximalReport:
    """Superlevel measure of the strong maximal function against the ``L log L`` integral."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    f = np.asarray(f, dtype=np.float64)
    M = strong_maximal_2d(f)
    sup = int((M > alpha).sum())
    t = f / alpha
    with np.errstate(divide="ignore"):
        logp = np.where(t > 1, np.log(np.where(t > 0, t, 1.0)), 0.0)
    orlicz = math.fsum((t * (1.0 + logp)).ravel())
    ratio = sup / orlicz if orlicz > 0 else (0.0 if sup == 0 else math.inf)
    return StrongMaximalReport(alpha, sup, orlicz, ratio, M)
