"""Exact measures of box arrangements on a compressed grid.

Every box set is reduced to the grid spanned by its distinct endpoints.  Depth
(the number of boxes covering a cell) comes from a 3-D difference array that is
prefix-summed slab by slab along z, so memory stays at ``O(gx * gy)`` per slab
while the result is identical to a full-volume prefix sum.  All measures are
exact Python integers; the only floating step is the deferred ``exp`` in
:func:`exp_integral`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterator, Mapping, Sequence

import numpy as np

from .geometry import Box3, boxes_to_array

# float64 holds every integer below this exactly, so bincount sums are exact
_FLOAT_EXACT = 2**53
_SLAB_CELLS = 1 << 22
MAX_EXP_ARG = 700.0


class ExpOverflowError(OverflowError):
    """Depth too large for a finite ``exp(c * depth)``."""


@dataclass(frozen=True, eq=False)
class Grid3:
    xs: np.ndarray
    ys: np.ndarray
    zs: np.ndarray

    def __post_init__(self):
        for name in ("xs", "ys", "zs"):
            a = np.asarray(getattr(self, name), dtype=np.int64)
            if a.ndim != 1 or a.size < 2 or np.any(np.diff(a) <= 0):
                raise ValueError(f"{name} must be strictly increasing with at least two breakpoints")
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.xs.size - 1, self.ys.size - 1, self.zs.size - 1)

    @property
    def widths(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return np.diff(self.xs), np.diff(self.ys), np.diff(self.zs)

    @property
    def hull(self) -> Box3:
        return Box3.from_bounds(
            (int(self.xs[0]), int(self.xs[-1])),
            (int(self.ys[0]), int(self.ys[-1])),
            (int(self.zs[0]), int(self.zs[-1])),
        )

    @property
    def volume(self) -> int:
        h = self.hull
        return h.volume

    def axis(self, a: int) -> np.ndarray:
        return (self.xs, self.ys, self.zs)[a]

    def cell_volumes(self) -> np.ndarray:
        dx, dy, dz = self.widths
        if self.volume >= _FLOAT_EXACT:
            dx, dy, dz = (w.astype(object) for w in (dx, dy, dz))
        return dx[:, None, None] * dy[None, :, None] * dz[None, None, :]

    def cell_box(self, i: int, j: int, k: int) -> Box3:
        return Box3.from_bounds(
            (int(self.xs[i]), int(self.xs[i + 1])),
            (int(self.ys[j]), int(self.ys[j + 1])),
            (int(self.zs[k]), int(self.zs[k + 1])),
        )


@dataclass(frozen=True, eq=False)
class DepthField:
    grid: Grid3
    depth: np.ndarray


@dataclass(frozen=True)
class DepthHistogram:
    """Measure per depth level, keyed from depth 0.

    ``reference`` is the measure of the region the histogram was taken over.
    """

    counts: Mapping[int, int]
    reference: int

    def __post_init__(self):
        object.__setattr__(self, "counts", {int(k): int(v) for k, v in sorted(self.counts.items()) if v})

    def __getitem__(self, k: int) -> int:
        return self.counts.get(k, 0)

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    @property
    def max_depth(self) -> int:
        return max(self.counts, default=0)

    def proportions(self) -> dict[int, Fraction]:
        return {k: Fraction(v, self.reference) for k, v in self.counts.items()}

    def exp_integral(self, c: float = 1.0) -> float:
        return exp_integral(self, c)

    def csv_rows(self) -> list[str]:
        return ["k,measure"] + [f"{k},{v}" for k, v in self.counts.items()]

    def to_json(self) -> dict:
        return {"reference": self.reference, "counts": [[k, v] for k, v in self.counts.items()]}

    @classmethod
    def from_json(cls, d: Mapping) -> "DepthHistogram":
        return cls({int(k): int(v) for k, v in d["counts"]}, int(d["reference"]))


@dataclass(frozen=True)
class JointDepthHistogram:
    counts: Mapping[tuple[int, int], int]
    reference: int

    def __post_init__(self):
        object.__setattr__(
            self, "counts", {(int(r), int(s)): int(v) for (r, s), v in sorted(self.counts.items()) if v}
        )

    def __getitem__(self, key: tuple[int, int]) -> int:
        return self.counts.get(key, 0)

    def marginal(self, which: int) -> DepthHistogram:
        """Marginal histogram of class ``which`` (1 or 2)."""
        out: dict[int, int] = {}
        for (r, s), v in self.counts.items():
            k = r if which == 1 else s
            out[k] = out.get(k, 0) + v
        return DepthHistogram(out, self.reference)

    def csv_rows(self) -> list[str]:
        return ["r,s,measure"] + [f"{r},{s},{v}" for (r, s), v in self.counts.items()]


# ---------------------------------------------------------------------------
# grids

def _grid_from_arrays(arrs: Sequence[np.ndarray], region: Sequence[int] | None = None) -> Grid3:
    axes = []
    for a in range(3):
        pts = [x[:, 2 * a : 2 * a + 2].ravel() for x in arrs if len(x)]
        v = np.unique(np.concatenate(pts)) if pts else np.zeros(0, dtype=np.int64)
        if region is not None:
            lo, hi = region[2 * a], region[2 * a + 1]
            v = np.unique(np.concatenate([[lo, hi], v[(v > lo) & (v < hi)]]))
        axes.append(v)
    return Grid3(*axes)


def compress(boxes: Sequence[Box3]) -> Grid3:
    """Grid whose breakpoints are the distinct box endpoints on each axis."""
    if not boxes:
        raise ValueError("cannot compress an empty box sequence")
    return _grid_from_arrays([boxes_to_array(boxes)])


def region_grid(region: Box3, *groups: Sequence[Box3]) -> Grid3:
    """Grid of ``region`` refined by the endpoints of the given boxes that fall inside it."""
    return _grid_from_arrays([boxes_to_array(g) for g in groups], region.bounds)


def clip_array(arr: np.ndarray, region: Sequence[int]) -> np.ndarray:
    """Clip ``(n, 6)`` boxes to ``region`` and drop those with empty interior overlap."""
    if not len(arr):
        return arr
    lo = np.asarray(region[0::2], dtype=np.int64)
    hi = np.asarray(region[1::2], dtype=np.int64)
    c = arr.copy()
    c[:, 0::2] = np.maximum(arr[:, 0::2], lo)
    c[:, 1::2] = np.minimum(arr[:, 1::2], hi)
    keep = np.all(c[:, 0::2] < c[:, 1::2], axis=1)
    return c[keep]


def iter_depth_slabs(grid: Grid3, arr: np.ndarray, max_cells: int = _SLAB_CELLS) -> Iterator[tuple[int, int, np.ndarray]]:
    """Yield ``(k0, k1, depth)`` with ``depth`` of shape ``(gx, gy, k1 - k0)``.

    ``arr`` holds boxes already clipped to the grid hull whose endpoints are
    grid breakpoints.  The difference array is cumulated along z chunk by
    chunk, carrying the running xy-difference plane between chunks.
    """
    gx, gy, gz = grid.shape
    n = len(arr)
    idx = [np.searchsorted(grid.axis(a), arr[:, 2 * a : 2 * a + 2]) if n else None for a in range(3)]
    if n:
        for a in range(3):
            if np.any(grid.axis(a)[np.minimum(idx[a], grid.axis(a).size - 1)] != arr[:, 2 * a : 2 * a + 2]):
                raise ValueError("box endpoints must be grid breakpoints")
        cx = np.concatenate([idx[0][:, (i >> 0) & 1] for i in range(8)])
        cy = np.concatenate([idx[1][:, (i >> 1) & 1] for i in range(8)])
        cz = np.concatenate([idx[2][:, (i >> 2) & 1] for i in range(8)])
        sgn = np.concatenate([np.full(n, -1 if bin(i).count("1") % 2 else 1, dtype=np.int32) for i in range(8)])
        live = (cx < gx) & (cy < gy) & (cz < gz)
        cx, cy, cz, sgn = cx[live], cy[live], cz[live], sgn[live]
    carry = np.zeros((gx, gy), dtype=np.int32)
    step = max(1, max_cells // max(1, gx * gy))
    for k0 in range(0, gz, step):
        k1 = min(gz, k0 + step)
        d = np.zeros((gx, gy, k1 - k0), dtype=np.int32)
        if n:
            sel = (cz >= k0) & (cz < k1)
            np.add.at(d, (cx[sel], cy[sel], cz[sel] - k0), sgn[sel])
        d[:, :, 0] += carry
        np.cumsum(d, axis=2, out=d)
        carry = d[:, :, -1].copy()
        np.cumsum(d, axis=0, out=d)
        np.cumsum(d, axis=1, out=d)
        yield k0, k1, d


def depth_field(boxes: Sequence[Box3], grid: Grid3 | None = None) -> DepthField:
    """Full per-cell depth array (use on small grids only)."""
    if grid is None:
        grid = compress(boxes)
    arr = clip_array(boxes_to_array(boxes), grid.hull.bounds)
    depth = np.zeros(grid.shape, dtype=np.int32)
    for k0, k1, d in iter_depth_slabs(grid, arr):
        depth[:, :, k0:k1] = d
    return DepthField(grid, depth)


def paint_depth(grid: Grid3, boxes: Sequence[Box3]) -> np.ndarray:
    """Depth by painting each box's cell range; independent of the difference-array path."""
    depth = np.zeros(grid.shape, dtype=np.int32)
    for b in boxes:
        sl = []
        for a, iv in enumerate((b.x, b.y, b.z)):
            ax = grid.axis(a)
            lo = int(np.searchsorted(ax, max(iv.lo, int(ax[0])), side="left"))
            hi = int(np.searchsorted(ax, min(iv.hi, int(ax[-1])), side="left"))
            sl.append(slice(lo, hi))
        depth[tuple(sl)] += 1
    return depth


def histogram_from_depth(grid: Grid3, keys: np.ndarray, mask: np.ndarray | None = None) -> dict[int, int]:
    """Measure per integer key over a full grid-shaped key array."""
    acc: dict[int, int] = {}
    _accumulate(acc, keys, grid.cell_volumes(), mask)
    return acc


def _accumulate(acc: dict[int, int], keys: np.ndarray, vol: np.ndarray, mask: np.ndarray | None = None) -> None:
    if mask is not None:
        keys = keys[mask]
        vol = vol[mask]
    keys = keys.ravel()
    vol = vol.ravel()
    if not keys.size:
        return
    if vol.dtype != object:
        counts = np.bincount(keys, weights=vol.astype(np.float64))
        for k in np.flatnonzero(counts):
            acc[int(k)] = acc.get(int(k), 0) + int(counts[k])
    else:
        for k in np.unique(keys):
            acc[int(k)] = acc.get(int(k), 0) + int(vol[keys == k].sum())


def sweep_counts(
    grid: Grid3,
    groups: Sequence[np.ndarray],
    key: Callable[[list[np.ndarray]], tuple[np.ndarray, np.ndarray | None]],
) -> dict[int, int]:
    """Measure per key over ``grid``, where ``key`` maps per-group depth slabs to
    ``(keys, mask)``.  Groups are ``(n, 6)`` arrays clipped to the grid hull.
    """
    vol_full = None
    dx, dy, dz = grid.widths
    big = grid.volume >= _FLOAT_EXACT
    if big:
        dx, dy, dz = (w.astype(object) for w in (dx, dy, dz))
    area = dx[:, None] * dy[None, :]
    acc: dict[int, int] = {}
    iters = [iter_depth_slabs(grid, g) for g in groups]
    for slabs in zip(*iters):
        k0, k1 = slabs[0][0], slabs[0][1]
        vol_full = area[:, :, None] * dz[None, None, k0:k1]
        keys, mask = key([s[2] for s in slabs])
        _accumulate(acc, keys, vol_full, mask)
    return acc


# ---------------------------------------------------------------------------
# public measures

def union_measure(boxes: Sequence[Box3]) -> int:
    """Exact Lebesgue measure of the union of ``boxes``."""
    if not boxes:
        return 0
    arr = boxes_to_array(boxes)
    return union_measure_array(arr)


def union_measure_array(arr: np.ndarray, region: Sequence[int] | None = None) -> int:
    if region is not None:
        arr = clip_array(arr, region)
    if not len(arr):
        return 0
    grid = _grid_from_arrays([arr])
    acc = sweep_counts(grid, [arr], lambda d: (np.minimum(d[0], 1), None))
    return acc.get(1, 0)


def depth_histogram(region: Box3, generators: Sequence[Box3]) -> DepthHistogram:
    """Measure of ``{x in region : sum_j 1[x in generator_j] = k}`` for every ``k >= 0``."""
    return depth_histogram_array(region.bounds, boxes_to_array(generators))


def depth_histogram_array(region: Sequence[int], gens: np.ndarray) -> DepthHistogram:
    gens = clip_array(gens, region)
    grid = _grid_from_arrays([gens], region)
    acc = sweep_counts(grid, [gens], lambda d: (d[0], None))
    return DepthHistogram(acc, grid.volume)


def joint_depth_histogram(region: Box3, class1: Sequence[Box3], class2: Sequence[Box3]) -> JointDepthHistogram:
    """Measure of each ``(r, s)`` level set of the two class depths inside ``region``."""
    return joint_depth_histogram_array(region.bounds, boxes_to_array(class1), boxes_to_array(class2))


def joint_depth_histogram_array(region: Sequence[int], c1: np.ndarray, c2: np.ndarray) -> JointDepthHistogram:
    c1 = clip_array(c1, region)
    c2 = clip_array(c2, region)
    grid = _grid_from_arrays([c1, c2], region)
    width = len(c2) + 1
    acc = sweep_counts(grid, [c1, c2], lambda d: (d[0].astype(np.int64) * width + d[1], None))
    return JointDepthHistogram({divmod(k, width): v for k, v in acc.items()}, grid.volume)


def covered_depth_histogram(generators: Sequence[Box3], cover: Sequence[Box3]) -> DepthHistogram:
    """Depth histogram of ``generators`` restricted to the union of ``cover``.

    The reference measure is the measure of that union.
    """
    return covered_depth_histogram_array(boxes_to_array(generators), boxes_to_array(cover))


def covered_depth_histogram_array(gens: np.ndarray, cover: np.ndarray, region: Sequence[int] | None = None) -> DepthHistogram:
    if region is None:
        if not len(cover):
            return DepthHistogram({}, 0)
        region = (
            int(cover[:, 0].min()), int(cover[:, 1].max()),
            int(cover[:, 2].min()), int(cover[:, 3].max()),
            int(cover[:, 4].min()), int(cover[:, 5].max()),
        )
    gens = clip_array(gens, region)
    cover = clip_array(cover, region)
    if not len(cover):
        return DepthHistogram({}, 0)
    grid = _grid_from_arrays([gens, cover], region)
    acc = sweep_counts(grid, [gens, cover], lambda d: (d[0], d[1] > 0))
    return DepthHistogram(acc, sum(acc.values()))


def exp_integral(h: DepthHistogram, c: float = 1.0) -> float:
    """``sum_k m_k * exp(c * k)`` evaluated from the exact histogram."""
    if c <= 0:
        raise ValueError("c must be positive")
    if h.max_depth * c > MAX_EXP_ARG:
        raise ExpOverflowError(f"depth {h.max_depth} with c={c} overflows exp")
    return math.fsum(m * math.exp(c * k) for k, m in h.counts.items())
