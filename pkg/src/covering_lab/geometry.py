"""Integer-lattice boxes in R^3, dilation, intersection and Zygmund-class validation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

# Largest absolute coordinate allowed anywhere in the pipeline.
COORD_LIMIT = 2**40
CANONICAL_DILATION = 3


class CoordinateOverflowError(ValueError):
    """A coordinate left the supported lattice range."""


class ProfileLookupError(KeyError):
    """A side-length pair was queried that the profile table does not sample."""


def _check_scalar(v: int) -> int:
    if abs(v) > COORD_LIMIT:
        raise CoordinateOverflowError(f"coordinate {v} exceeds 2^40")
    return v


@dataclass(frozen=True, slots=True)
class Interval:
    lo: int
    hi: int

    def __post_init__(self):
        if not (isinstance(self.lo, (int, np.integer)) and isinstance(self.hi, (int, np.integer))):
            raise TypeError("interval endpoints must be integers")
        object.__setattr__(self, "lo", int(self.lo))
        object.__setattr__(self, "hi", int(self.hi))
        if self.lo >= self.hi:
            raise ValueError(f"degenerate interval [{self.lo}, {self.hi}]")
        _check_scalar(self.lo)
        _check_scalar(self.hi)

    @property
    def length(self) -> int:
        return self.hi - self.lo

    def dilate(self, factor: int) -> "Interval":
        # center (lo+hi)/2 is kept; half-length scales by factor, so
        # new lo = (lo+hi)/2 - factor*(hi-lo)/2 which is integral for odd factor
        s = self.lo + self.hi
        h = factor * (self.hi - self.lo)
        return Interval((s - h) // 2, (s + h) // 2)


@dataclass(frozen=True, slots=True)
class Box3:
    """Closed axis-parallel box with integer endpoints."""

    x: Interval
    y: Interval
    z: Interval

    @classmethod
    def from_bounds(cls, x: Sequence[int], y: Sequence[int], z: Sequence[int]) -> "Box3":
        return cls(Interval(*x), Interval(*y), Interval(*z))

    @property
    def lengths(self) -> tuple[int, int, int]:
        return (self.x.length, self.y.length, self.z.length)

    @property
    def volume(self) -> int:
        return self.x.length * self.y.length * self.z.length

    @property
    def bounds(self) -> tuple[int, int, int, int, int, int]:
        return (self.x.lo, self.x.hi, self.y.lo, self.y.hi, self.z.lo, self.z.hi)

    def to_json(self) -> dict:
        return {"x": [self.x.lo, self.x.hi], "y": [self.y.lo, self.y.hi], "z": [self.z.lo, self.z.hi]}

    @classmethod
    def from_json(cls, d: Mapping) -> "Box3":
        return cls.from_bounds(d["x"], d["y"], d["z"])


def dilate(b: Box3, factor: int = CANONICAL_DILATION) -> Box3:
    """Concentric dilation of ``b`` by a positive odd integer factor.

    For factor 3 each axis ``[a, b]`` maps to ``[2a - b, 2b - a]``.
    """
    if factor <= 0 or factor % 2 == 0:
        raise ValueError(f"dilation factor must be a positive odd integer, got {factor}")
    return Box3(b.x.dilate(factor), b.y.dilate(factor), b.z.dilate(factor))


def intersect(a: Box3, b: Box3) -> Box3 | None:
    """Closed intersection of two boxes, or None when interiors are disjoint."""
    lo = (max(a.x.lo, b.x.lo), max(a.y.lo, b.y.lo), max(a.z.lo, b.z.lo))
    hi = (min(a.x.hi, b.x.hi), min(a.y.hi, b.y.hi), min(a.z.hi, b.z.hi))
    if any(l >= h for l, h in zip(lo, hi)):
        return None
    return Box3(Interval(lo[0], hi[0]), Interval(lo[1], hi[1]), Interval(lo[2], hi[2]))


def boxes_to_array(boxes: Iterable[Box3]) -> np.ndarray:
    """(n, 6) int64 array of ``x0, x1, y0, y1, z0, z1`` rows."""
    rows = [b.bounds for b in boxes]
    if not rows:
        return np.zeros((0, 6), dtype=np.int64)
    return np.array(rows, dtype=np.int64)


@dataclass(frozen=True)
class ZygmundProfile:
    """Tabulated side-length profile ``phi(x, y)``.

    Only sampled pairs can be evaluated; anything else raises
    :class:`ProfileLookupError`.
    """

    table: Mapping[tuple[int, int], int]

    def __post_init__(self):
        object.__setattr__(self, "table", dict(sorted((tuple(map(int, k)), int(v)) for k, v in self.table.items())))

    def __call__(self, x: int, y: int) -> int:
        try:
            return self.table[(x, y)]
        except KeyError:
            raise ProfileLookupError((x, y)) from None

    def __contains__(self, key) -> bool:
        return key in self.table

    def monotonicity_violations(self) -> list[tuple[tuple[int, int], tuple[int, int]]]:
        """Pairs ``(p, q)`` with ``p <= q`` componentwise but ``phi(p) > phi(q)``."""
        items = list(self.table.items())
        out = []
        for p, vp in items:
            for q, vq in items:
                if p != q and p[0] <= q[0] and p[1] <= q[1] and vp > vq:
                    out.append((p, q))
        return out

    def to_json(self) -> list[dict]:
        return [{"x": x, "y": y, "phi": v} for (x, y), v in self.table.items()]

    @classmethod
    def from_json(cls, rows: Iterable[Mapping]) -> "ZygmundProfile":
        return cls({(int(r["x"]), int(r["y"])): int(r["phi"]) for r in rows})


@dataclass(frozen=True)
class BoxFamily:
    """Boxes in enlistment order, optionally tagged with the profile they claim."""

    boxes: tuple[Box3, ...]
    profile: ZygmundProfile | None = None

    def __post_init__(self):
        object.__setattr__(self, "boxes", tuple(self.boxes))

    def __len__(self) -> int:
        return len(self.boxes)

    def subset(self, indices: Sequence[int]) -> "BoxFamily":
        return BoxFamily(tuple(self.boxes[i] for i in indices), self.profile)

    def to_json(self) -> dict:
        return {
            "profile": self.profile.to_json() if self.profile is not None else None,
            "boxes": [b.to_json() for b in self.boxes],
        }

    @classmethod
    def from_json(cls, d: Mapping) -> "BoxFamily":
        prof = d.get("profile")
        return cls(
            tuple(Box3.from_json(b) for b in d["boxes"]),
            ZygmundProfile.from_json(prof) if prof is not None else None,
        )


def check_family_bounds(family: BoxFamily, dilation: int = CANONICAL_DILATION) -> None:
    """Reject a family whose dilated boxes would leave the coordinate range."""
    for i, b in enumerate(family.boxes):
        try:
            dilate(b, dilation)
        except CoordinateOverflowError as exc:
            raise CoordinateOverflowError(f"box {i}: {exc}") from None


@dataclass
class ValidationReport:
    box_violations: list[dict] = field(default_factory=list)
    monotonicity_violations: list[tuple[tuple[int, int], tuple[int, int]]] = field(default_factory=list)
    missing_profile: bool = False

    @property
    def ok(self) -> bool:
        return not (self.box_violations or self.monotonicity_violations or self.missing_profile)

    def to_json(self) -> dict:
        return {
            "ok": self.ok,
            "missing_profile": self.missing_profile,
            "box_violations": self.box_violations,
            "monotonicity_violations": [[list(p), list(q)] for p, q in self.monotonicity_violations],
        }


def validate_zygmund(f: BoxFamily) -> ValidationReport:
    """Check every box against the family profile and the profile for monotonicity."""
    rep = ValidationReport()
    if f.profile is None:
        rep.missing_profile = True
        return rep
    for i, b in enumerate(f.boxes):
        lx, ly, lz = b.lengths
        try:
            expected = f.profile(lx, ly)
        except ProfileLookupError:
            rep.box_violations.append({"index": i, "lengths": [lx, ly, lz], "expected_z": None})
            continue
        if lz != expected:
            rep.box_violations.append({"index": i, "lengths": [lx, ly, lz], "expected_z": expected})
    rep.monotonicity_violations = f.profile.monotonicity_violations()
    return rep
