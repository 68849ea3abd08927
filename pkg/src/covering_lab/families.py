"""Seeded generators for Zygmund-class and two-side-dominated box families."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Mapping

import numpy as np

from .geometry import Box3, BoxFamily, ZygmundProfile, validate_zygmund

AXES = "xyz"
# each later box is dominated by every earlier one on both axes of its pair
DEFAULT_PAIRS = ("xz", "yz")


class GenerationError(RuntimeError):
    pass


class TrialRng:
    """Integer draws from PCG64 seeded through ``SeedSequence(seed, spawn_key=(trial,))``.

    Bounded draws use rejection on raw 64-bit outputs, so the stream depends only
    on the bit generator and not on numpy's distribution code.
    """

    def __init__(self, seed: int, trial: int = 0):
        self._bg = np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(trial,)))

    def raw(self) -> int:
        return int(self._bg.random_raw())

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in ``[lo, hi]`` inclusive."""
        span = hi - lo + 1
        if span <= 0:
            raise ValueError(f"empty range [{lo}, {hi}]")
        limit = 2**64 - (2**64 % span)
        while True:
            v = self.raw()
            if v < limit:
                return lo + v % span


@dataclass
class ProfileSpec:
    side_min: int = 2
    side_max: int = 24
    samples: int = 6
    base_max: int = 4
    increment_max: int = 6

    def side_values(self) -> list[int]:
        vals = np.linspace(self.side_min, self.side_max, self.samples)
        return sorted({int(round(v)) for v in vals})


@dataclass
class ExperimentConfig:
    seed: int = 42
    n_boxes: int = 100
    coordinate_range: int = 256
    profile: ProfileSpec = field(default_factory=ProfileSpec)
    threshold: float = 3.0
    dilation: int = 3
    c: float = 1.0
    trial_count: int = 1
    family: str = "zygmund"
    adversarial_pairs: tuple[str, ...] = DEFAULT_PAIRS

    def to_json(self) -> dict:
        d = asdict(self)
        d["adversarial_pairs"] = list(self.adversarial_pairs)
        return d

    @classmethod
    def from_json(cls, d: Mapping) -> "ExperimentConfig":
        d = dict(d)
        if "profile" in d and d["profile"] is not None:
            d["profile"] = ProfileSpec(**d["profile"])
        if "adversarial_pairs" in d:
            d["adversarial_pairs"] = tuple(d["adversarial_pairs"])
        return cls(**d)


def random_monotone_profile(spec: ProfileSpec, rng: TrialRng) -> ZygmundProfile:
    """Table over ``side_values()^2`` built from nonnegative increments.

    ``phi[i][j] = max(phi[i-1][j], phi[i][j-1]) + increment``, so every row and
    column is nondecreasing.
    """
    sides = spec.side_values()
    n = len(sides)
    phi = [[0] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            if i == 0 and j == 0:
                phi[i][j] = rng.randint(1, spec.base_max)
                continue
            prev = max(phi[i - 1][j] if i else 0, phi[i][j - 1] if j else 0)
            phi[i][j] = prev + rng.randint(0, spec.increment_max)
    return ZygmundProfile({(sides[i], sides[j]): phi[i][j] for i in range(n) for j in range(n)})


def _place(rng: TrialRng, length: int, coord_range: int) -> tuple[int, int]:
    lo = rng.randint(0, max(0, coord_range - length))
    return lo, lo + length


def generate_zygmund_family(cfg: ExperimentConfig, trial: int = 0) -> BoxFamily:
    rng = TrialRng(cfg.seed, trial)
    profile = random_monotone_profile(cfg.profile, rng)
    sides = cfg.profile.side_values()
    boxes = []
    for _ in range(cfg.n_boxes):
        lx = sides[rng.randint(0, len(sides) - 1)]
        ly = sides[rng.randint(0, len(sides) - 1)]
        lz = profile(lx, ly)
        boxes.append(
            Box3.from_bounds(
                _place(rng, lx, cfg.coordinate_range),
                _place(rng, ly, cfg.coordinate_range),
                _place(rng, lz, cfg.coordinate_range),
            )
        )
    fam = BoxFamily(tuple(boxes), profile)
    rep = validate_zygmund(fam)
    if not rep.ok:
        raise GenerationError(f"generated family failed validation: {rep.to_json()}")
    return fam


def domination_failures(f: BoxFamily, pairs=DEFAULT_PAIRS) -> list[tuple[int, int]]:
    """Pairs ``(earlier, later)`` where the earlier box does not dominate the later
    one on both axes of any allowed pair."""
    idx = [tuple(AXES.index(a) for a in p) for p in pairs]
    out = []
    lens = [b.lengths for b in f.boxes]
    for k, lk in enumerate(lens):
        for j in range(k):
            lj = lens[j]
            if not any(lj[a] >= lk[a] and lj[b] >= lk[b] for a, b in idx):
                out.append((j, k))
    return out


def generate_adversarial_family(cfg: ExperimentConfig, trial: int = 0, max_retries: int = 16) -> BoxFamily:
    """Family whose enlistment order has every box dominated by all predecessors
    on two side lengths (one of ``cfg.adversarial_pairs`` per box)."""
    spec = cfg.profile
    pairs = tuple(cfg.adversarial_pairs)
    for attempt in range(max_retries):
        rng = TrialRng(cfg.seed, trial + attempt * 1_000_003)
        boxes = []
        mins = [spec.side_max] * 3
        for k in range(cfg.n_boxes):
            if k == 0:
                lens = [rng.randint((spec.side_min + spec.side_max) // 2, spec.side_max) for _ in range(3)]
            else:
                pair = pairs[rng.randint(0, len(pairs) - 1)]
                # free axis never drops below its running minimum, so only the
                # occasional unit shrink on a paired axis makes sides decay
                lens = [rng.randint(m, spec.side_max) for m in mins]
                for a in pair:
                    ax = AXES.index(a)
                    shrink = 1 if rng.randint(0, 15) == 0 else 0
                    lens[ax] = max(1, mins[ax] - shrink)
            mins = [min(m, l) for m, l in zip(mins, lens)]
            boxes.append(
                Box3.from_bounds(*(_place(rng, l, cfg.coordinate_range) for l in lens))
            )
        fam = BoxFamily(tuple(boxes), None)
        if not domination_failures(fam, pairs):
            return fam
    raise GenerationError(f"no certified adversarial family after {max_retries} attempts")


def generate_family(cfg: ExperimentConfig, trial: int = 0) -> BoxFamily:
    if cfg.family == "zygmund":
        return generate_zygmund_family(cfg, trial)
    if cfg.family == "adversarial":
        return generate_adversarial_family(cfg, trial)
    raise ValueError(f"unknown family kind {cfg.family!r}")
