"""Ordering, P1 filtering, the exponential sieve and replay verification."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .geometry import CANONICAL_DILATION, Box3, BoxFamily, boxes_to_array, dilate
from .measure import (
    DepthHistogram,
    ExpOverflowError,
    _grid_from_arrays,
    clip_array,
    covered_depth_histogram_array,
    depth_histogram_array,
    exp_integral,
    histogram_from_depth,
    joint_depth_histogram_array,
    paint_depth,
    sweep_counts,
    union_measure_array,
)

DEFAULT_THRESHOLD = 3.0
DEFAULT_C = 1.0
REL_SLACK = 1e-9


def chain_constant(threshold: float = DEFAULT_THRESHOLD, c: float = DEFAULT_C) -> float:
    """``1 + 5 * 2t e^c / (sqrt(t) - 1)``; equals ``1 + 30e/(sqrt(3) - 1)`` at the defaults."""
    return 1.0 + 5.0 * exp_bound(threshold, c) / (math.sqrt(threshold) - 1.0)


def exp_bound(threshold: float = DEFAULT_THRESHOLD, c: float = DEFAULT_C) -> float:
    """Constant ``2 t e^c`` bounding the exp-integral per unit of selected measure (6e at defaults)."""
    return 2.0 * threshold * math.exp(c)


# ---------------------------------------------------------------------------
# ordering and P1

def third_side_order(f: BoxFamily) -> list[int]:
    """Stable descending order on z-length; ties keep enlistment order."""
    return sorted(range(len(f)), key=lambda i: -f.boxes[i].z.length)


def order_by_third_side(f: BoxFamily) -> BoxFamily:
    return f.subset(third_side_order(f))


def p1_filter(f: BoxFamily) -> tuple[BoxFamily, list[int]]:
    """Greedy P1 scan: keep a box when at most half of it is covered by earlier kept boxes.

    Returns the kept family and the positions (in ``f``) of dropped boxes.
    """
    kept_rows: list[tuple[int, ...]] = []
    kept: list[int] = []
    dropped: list[int] = []
    for i, b in enumerate(f.boxes):
        covered = union_measure_array(np.array(kept_rows, dtype=np.int64).reshape(-1, 6), b.bounds)
        if 2 * covered <= b.volume:
            kept.append(i)
            kept_rows.append(b.bounds)
        else:
            dropped.append(i)
    return f.subset(kept), dropped


# ---------------------------------------------------------------------------
# selection

@dataclass
class TraceEntry:
    index: int
    avg: float
    accepted: bool
    Ik: float
    hist: DepthHistogram

    def to_json(self) -> dict:
        return {
            "index": self.index,
            "avg": self.avg,
            "accepted": self.accepted,
            "Ik": self.Ik,
            "hist": [[k, v] for k, v in self.hist.counts.items()],
        }


@dataclass
class SelectionResult:
    """Outcome of the sieve.  Indices refer to the family given to :func:`select_family`
    (or to candidate positions when :func:`cordoba_select` is called directly)."""

    selected: list[int]
    rejected: list[int]
    trace: list[TraceEntry]
    constants: dict[str, float]
    params: dict
    dropped: list[int] = field(default_factory=list)
    final_hist: DepthHistogram | None = None

    def to_json(self) -> dict:
        return {
            "selected": list(self.selected),
            "rejected": list(self.rejected),
            "dropped": list(self.dropped),
            "trace": [t.to_json() for t in self.trace],
            "constants": dict(self.constants),
            "params": dict(self.params),
            "final_hist": self.final_hist.to_json() if self.final_hist is not None else None,
        }

    @classmethod
    def from_json(cls, d: dict) -> "SelectionResult":
        trace = []
        for t in d["trace"]:
            counts = {int(k): int(v) for k, v in t.get("hist", [])}
            h = DepthHistogram(counts, sum(counts.values()))
            trace.append(TraceEntry(int(t["index"]), float(t["avg"]), bool(t["accepted"]), float(t["Ik"]), h))
        fh = d.get("final_hist")
        return cls(
            list(d["selected"]), list(d["rejected"]), trace, dict(d["constants"]), dict(d.get("params", {})),
            list(d.get("dropped", [])), DepthHistogram.from_json(fh) if fh else None,
        )


def _exp_hist_key(d):
    # dilated depth * 4 + [in earlier union] * 2 + [in new box]
    return d[0].astype(np.int64) * 4 + (d[1] > 0) * 2 + (d[2] > 0), None


def _update_union_hist(hist: dict[int, int], region: Sequence[int], dil: np.ndarray, und: np.ndarray, new: Sequence[int]) -> None:
    """Fold one accepted box into the histogram of dilated depth over the selected union.

    Only the new dilated box changes anything, and inside it every depth rises by one.
    """
    dil = clip_array(dil, region)
    und = clip_array(und, region)
    newa = clip_array(np.array([new], dtype=np.int64), region)
    grid = _grid_from_arrays([dil, und, newa], region)
    acc = sweep_counts(grid, [dil, und, newa], _exp_hist_key)
    for key, m in acc.items():
        d, was_in, is_new = key >> 2, (key >> 1) & 1, key & 1
        if was_in:
            hist[d] -= m
        if was_in or is_new:
            hist[d + 1] = hist.get(d + 1, 0) + m


def cordoba_select(
    f: BoxFamily,
    threshold: float = DEFAULT_THRESHOLD,
    dilation: int = CANONICAL_DILATION,
    c: float = DEFAULT_C,
    ids: Sequence[int] | None = None,
) -> SelectionResult:
    """Run the exponential sieve over ``f`` in order.

    A candidate ``R`` is accepted iff the average over ``R`` of
    ``exp(c * depth)``, with depth counted over the dilations of the boxes
    selected so far, is at most ``threshold``.  ``f`` is expected to be
    ordered and P1-filtered already.
    """
    ids = list(range(len(f))) if ids is None else list(ids)
    sel_und: list[tuple[int, ...]] = []
    sel_dil: list[tuple[int, ...]] = []
    selected, rejected, trace = [], [], []
    hist: dict[int, int] = {}
    Ik = 0.0
    for pos, R in enumerate(f.boxes):
        dil_arr = np.array(sel_dil, dtype=np.int64).reshape(-1, 6)
        h = depth_histogram_array(R.bounds, dil_arr)
        try:
            avg = exp_integral(h, c) / R.volume
        except ExpOverflowError as exc:
            raise ExpOverflowError(f"candidate {ids[pos]}: {exc}") from None
        accepted = avg <= threshold
        if accepted:
            Rd = dilate(R, dilation)
            _update_union_hist(
                hist, Rd.bounds, dil_arr, np.array(sel_und, dtype=np.int64).reshape(-1, 6), R.bounds
            )
            sel_und.append(R.bounds)
            sel_dil.append(Rd.bounds)
            selected.append(ids[pos])
            Ik = exp_integral(DepthHistogram(hist, 1), c)
        else:
            rejected.append(ids[pos])
        trace.append(TraceEntry(ids[pos], avg, accepted, Ik, h))

    final = DepthHistogram(hist, sum(v for v in hist.values()))
    sel_measure = final.total
    constants = {
        "exp_ratio": Ik / sel_measure if sel_measure else 0.0,
        "bound_6e": exp_bound(threshold, c),
    }
    params = {
        "threshold": threshold,
        "dilation": dilation,
        "c": c,
        "canonical": threshold == 3 and dilation == CANONICAL_DILATION and c == 1,
    }
    return SelectionResult(selected, rejected, trace, constants, params, final_hist=final)


def select_family(
    f: BoxFamily,
    threshold: float = DEFAULT_THRESHOLD,
    dilation: int = CANONICAL_DILATION,
    c: float = DEFAULT_C,
    reorder: bool = True,
) -> SelectionResult:
    """Order (optionally), P1-filter and sieve ``f``; indices in the result refer to ``f``."""
    order = third_side_order(f) if reorder else list(range(len(f)))
    ordered = f.subset(order)
    kept, dropped_pos = p1_filter(ordered)
    dropped_set = set(dropped_pos)
    kept_ids = [order[p] for p in range(len(order)) if p not in dropped_set]
    res = cordoba_select(kept, threshold, dilation, c, ids=kept_ids)
    res.dropped = [order[p] for p in dropped_pos]
    all_m = union_measure_array(boxes_to_array(f.boxes))
    sel_m = res.final_hist.total if res.final_hist else 0
    res.constants["measure_ratio"] = all_m / sel_m if sel_m else 1.0
    res.constants = dict(sorted(res.constants.items()))
    return res


# ---------------------------------------------------------------------------
# class split and product bound

@dataclass
class ClassSplit:
    class1: list[int]
    class2: list[int]
    unclassified: list[int]


def split_classes(R: Box3, prior: Sequence[Box3]) -> ClassSplit:
    """Partition earlier boxes by which side lengths dominate those of ``R`` (non-strict).

    class1: x and z lengths at least R's; class2: of the rest, y and z lengths at least R's.
    """
    rx, ry, rz = R.lengths
    out = ClassSplit([], [], [])
    for i, p in enumerate(prior):
        px, py, pz = p.lengths
        if px >= rx and pz >= rz:
            out.class1.append(i)
        elif py >= ry and pz >= rz:
            out.class2.append(i)
        else:
            out.unclassified.append(i)
    return out


@dataclass
class ProductBoundReport:
    measure: int
    split: ClassSplit
    joint: dict[tuple[int, int], int]
    class1_hist: dict[int, int]
    class2_hist: dict[int, int]
    violations: list[dict]
    marginals_ok: bool
    series: dict[str, float]

    @property
    def ok(self) -> bool:
        return not self.violations and self.marginals_ok

    def to_json(self) -> dict:
        return {
            "ok": self.ok,
            "measure": self.measure,
            "class1": self.split.class1,
            "class2": self.split.class2,
            "unclassified": self.split.unclassified,
            "joint": [[r, s, v] for (r, s), v in self.joint.items()],
            "class1_hist": [[k, v] for k, v in self.class1_hist.items()],
            "class2_hist": [[k, v] for k, v in self.class2_hist.items()],
            "violations": self.violations,
            "marginals_ok": self.marginals_ok,
            "series": self.series,
        }


def product_bound_check(
    R: Box3, prior: Sequence[Box3], dilation: int = CANONICAL_DILATION, c: float = DEFAULT_C
) -> ProductBoundReport:
    """Compare the joint class histogram over ``R`` with the product of the class marginals.

    With ``a_0 = b_0 = 1`` the comparison ``A_{r,s} <= a_r b_s`` is done in
    integers as ``m_{r,s} * m(R) <= m'_r * m'_s`` where ``m'_0 = m(R)``.
    """
    split = split_classes(R, prior)
    c1 = boxes_to_array([dilate(prior[i], dilation) for i in split.class1])
    c2 = boxes_to_array([dilate(prior[i], dilation) for i in split.class2])
    joint = joint_depth_histogram_array(R.bounds, c1, c2)
    h1 = depth_histogram_array(R.bounds, c1)
    h2 = depth_histogram_array(R.bounds, c2)
    mR = R.volume
    marginals_ok = joint.marginal(1).counts == h1.counts and joint.marginal(2).counts == h2.counts

    def conv(h: DepthHistogram, k: int) -> int:
        return mR if k == 0 else h[k]

    violations = []
    for (r, s), m in joint.counts.items():
        lhs = m * mR
        rhs = conv(h1, r) * conv(h2, s)
        if lhs > rhs:
            violations.append({"r": r, "s": s, "lhs": lhs, "rhs": rhs})

    s1 = 1.0 + math.fsum(v * math.exp(c * k) for k, v in h1.counts.items() if k) / mR
    s2 = 1.0 + math.fsum(v * math.exp(c * k) for k, v in h2.counts.items() if k) / mR
    split_series = math.fsum(v * math.exp(c * (r + s)) for (r, s), v in joint.counts.items()) / mR
    series = {
        "class1_factor": s1,
        "class2_factor": s2,
        "product": s1 * s2,
        "split_series": split_series,
    }
    return ProductBoundReport(mR, split, dict(joint.counts), dict(h1.counts), dict(h2.counts), violations, marginals_ok, series)


# ---------------------------------------------------------------------------
# verification

@dataclass
class VerificationReport:
    checks: dict[str, dict]
    constants: dict[str, float]
    params: dict
    diagnostics: dict[str, dict] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(v["passed"] for v in self.checks.values())

    def failures(self) -> list[str]:
        return [k for k, v in self.checks.items() if not v["passed"]]

    def to_json(self) -> dict:
        return {
            "ok": self.ok,
            "checks": self.checks,
            "diagnostics": self.diagnostics,
            "constants": self.constants,
            "params": self.params,
        }


def _painted_hist(region: Box3, gens: np.ndarray) -> dict[int, int]:
    gens = clip_array(gens, region.bounds)
    grid = _grid_from_arrays([gens], region.bounds)
    boxes = [Box3.from_bounds(g[0:2], g[2:4], g[4:6]) for g in gens.tolist()]
    return histogram_from_depth(grid, paint_depth(grid, boxes))


def _painted_union_delta(hist: dict[int, int], Rd: Box3, dil: np.ndarray, und: np.ndarray, R: Box3) -> None:
    dil = clip_array(dil, Rd.bounds)
    und = clip_array(und, Rd.bounds)
    grid = _grid_from_arrays([dil, und, np.array([R.bounds], dtype=np.int64)], Rd.bounds)
    to_boxes = lambda a: [Box3.from_bounds(g[0:2], g[2:4], g[4:6]) for g in a.tolist()]  # noqa: E731
    dd = paint_depth(grid, to_boxes(dil))
    was = paint_depth(grid, to_boxes(und)) > 0
    new = paint_depth(grid, [R]) > 0
    for k, m in histogram_from_depth(grid, dd, was).items():
        hist[k] -= m
    for k, m in histogram_from_depth(grid, dd + 1, was | new).items():
        hist[k] = hist.get(k, 0) + m


def _painted_undilated_delta(hist: dict[int, int], R: Box3, und: np.ndarray) -> None:
    und = clip_array(und, R.bounds)
    grid = _grid_from_arrays([und], R.bounds)
    dd = paint_depth(grid, [Box3.from_bounds(g[0:2], g[2:4], g[4:6]) for g in und.tolist()])
    for k, m in histogram_from_depth(grid, dd, dd > 0).items():
        hist[k] -= m
    for k, m in histogram_from_depth(grid, dd + 1).items():
        hist[k] = hist.get(k, 0) + m


def verify_selection(result: SelectionResult, f: BoxFamily) -> VerificationReport:
    """Recompute every inequality of the selection from scratch.

    Per-candidate histograms and the running union histogram are rebuilt by
    box painting on local grids, independently of the sieve's difference-array
    path, and compared with the recorded trace.

    ``checks`` holds the pass/fail items; ``diagnostics`` holds the one-step
    recursion ``I_k <= I_{k-1} + t e^c m(R_k)`` for the dilated depth (which can
    fail: the dilated depth also grows on earlier boxes outside ``R_k``) and
    the same recursion for the undilated depth.
    """
    thr = float(result.params.get("threshold", DEFAULT_THRESHOLD))
    dilation = int(result.params.get("dilation", CANONICAL_DILATION))
    c = float(result.params.get("c", DEFAULT_C))
    e_c = math.exp(c)

    sieve_fail, cumulative_fail, step_fail, und_step_fail, p1_fail = [], [], [], [], []
    sel_und: list[tuple[int, ...]] = []
    sel_dil: list[tuple[int, ...]] = []
    hist: dict[int, int] = {}
    und_hist: dict[int, int] = {}
    I_prev = J_prev = 0.0
    sum_measure = 0
    steps = 0
    selected_set = set(result.selected)
    for t in result.trace:
        R = f.boxes[t.index]
        dil_arr = np.array(sel_dil, dtype=np.int64).reshape(-1, 6)
        counts = _painted_hist(R, dil_arr)
        avg = exp_integral(DepthHistogram(counts, R.volume), c) / R.volume
        accept = avg <= thr
        problems = []
        if counts != dict(t.hist.counts):
            problems.append("histogram mismatch")
        if avg != t.avg:
            problems.append(f"avg {avg!r} != recorded {t.avg!r}")
        if accept != t.accepted or accept != (t.index in selected_set):
            problems.append(f"decision: avg {avg!r} vs threshold {thr}, recorded accepted={t.accepted}")
        if problems:
            sieve_fail.append({"index": t.index, "avg": avg, "problems": problems})
        if not accept:
            continue

        steps += 1
        und_arr = np.array(sel_und, dtype=np.int64).reshape(-1, 6)
        covered = union_measure_array(und_arr, R.bounds)
        if 2 * covered > R.volume:
            p1_fail.append({"index": t.index, "lhs": 2 * covered, "rhs": R.volume})

        Rd = dilate(R, dilation)
        _painted_union_delta(hist, Rd, dil_arr, und_arr, R)
        _painted_undilated_delta(und_hist, R, und_arr)
        sel_und.append(R.bounds)
        sel_dil.append(Rd.bounds)
        Ik = exp_integral(DepthHistogram(hist, 1), c)
        Jk = exp_integral(DepthHistogram(und_hist, 1), c)
        sum_measure += R.volume
        step_rhs = I_prev + thr * e_c * R.volume
        cum_rhs = thr * e_c * sum_measure
        if Ik > cum_rhs * (1 + REL_SLACK):
            cumulative_fail.append({"index": t.index, "Ik": Ik, "rhs": cum_rhs})
        if Ik > step_rhs * (1 + REL_SLACK):
            step_fail.append({"index": t.index, "Ik": Ik, "I_prev": I_prev, "rhs": step_rhs})
        und_rhs = J_prev + thr * e_c * R.volume
        if Jk > und_rhs * (1 + REL_SLACK):
            und_step_fail.append({"index": t.index, "Jk": Jk, "J_prev": J_prev, "rhs": und_rhs})
        I_prev, J_prev = Ik, Jk

    und_all = np.array(sel_und, dtype=np.int64).reshape(-1, 6)
    dil_all = np.array(sel_dil, dtype=np.int64).reshape(-1, 6)
    full = covered_depth_histogram_array(dil_all, und_all)
    sel_measure = full.total
    I_final = exp_integral(full, c) if sel_measure else 0.0
    eq3_rhs = exp_bound(thr, c) * sel_measure
    incremental_matches = {k: v for k, v in hist.items() if v} == dict(full.counts)
    if result.final_hist is not None:
        incremental_matches = incremental_matches and dict(result.final_hist.counts) == dict(full.counts)

    all_measure = union_measure_array(boxes_to_array(f.boxes))
    rej_measure = union_measure_array(boxes_to_array([f.boxes[i] for i in result.rejected]))
    lam = math.sqrt(thr) - 1.0
    cstar = chain_constant(thr, c)
    ratio = all_measure / sel_measure if sel_measure else (1.0 if not all_measure else math.inf)
    rejected_rhs = 5.0 / lam * eq3_rhs

    checks = {
        "exp_integral_bound": {
            "passed": I_final <= eq3_rhs * (1 + REL_SLACK) and incremental_matches,
            "lhs": I_final,
            "rhs": eq3_rhs,
            "histograms_agree": incremental_matches,
        },
        "induction_cumulative": {"passed": not cumulative_fail, "steps": steps, "failures": cumulative_fail},
        "p1": {"passed": not p1_fail, "steps": steps, "failures": p1_fail},
        "sieve": {"passed": not sieve_fail, "candidates": len(result.trace), "failures": sieve_fail},
        "measure_ratio": {"passed": ratio <= cstar, "lhs": ratio, "rhs": cstar},
        "rejected_chain": {"passed": rej_measure <= rejected_rhs, "lhs": rej_measure, "rhs": rejected_rhs},
    }
    diagnostics = {
        "induction_step": {"passed": not step_fail, "steps": steps, "failures": step_fail},
        "induction_step_undilated": {"passed": not und_step_fail, "steps": steps, "failures": und_step_fail},
    }
    constants = {
        "measure_ratio": ratio,
        "exp_ratio": I_final / sel_measure if sel_measure else 0.0,
        "bound_6e": exp_bound(thr, c),
        "chain_constant": cstar,
        "union_all": all_measure,
        "union_selected": sel_measure,
        "union_rejected": rej_measure,
    }
    return VerificationReport(checks, constants, dict(result.params), diagnostics)
