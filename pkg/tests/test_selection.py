import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from covering_lab.families import ExperimentConfig, generate_zygmund_family
from covering_lab.geometry import Box3, BoxFamily, ZygmundProfile, dilate
from covering_lab.measure import depth_histogram, exp_integral, union_measure
from covering_lab.selection import (
    SelectionResult,
    chain_constant,
    cordoba_select,
    exp_bound,
    order_by_third_side,
    p1_filter,
    product_bound_check,
    select_family,
    split_classes,
    third_side_order,
    verify_selection,
)

from conftest import boxes
from oracles import raster_hist

B = Box3.from_bounds


def zlen_family(zs):
    return BoxFamily(tuple(B((3 * i, 3 * i + 1), (0, 1), (0, z)) for i, z in enumerate(zs)))


def test_order_example():
    assert third_side_order(zlen_family([2, 5, 5, 1])) == [1, 2, 0, 3]


def test_order_sorted_unchanged():
    f = zlen_family([5, 4, 4, 1])
    assert order_by_third_side(f) == f


@given(st.lists(boxes(), max_size=12))
def test_order_nonincreasing(bs):
    zs = [b.z.length for b in order_by_third_side(BoxFamily(tuple(bs))).boxes]
    assert zs == sorted(zs, reverse=True)


def test_p1_identical_boxes():
    kept, dropped = p1_filter(BoxFamily((B((0, 2), (0, 2), (0, 2)),) * 2))
    assert len(kept) == 1 and dropped == [1]


def test_p1_disjoint_kept():
    f = BoxFamily((B((0, 1), (0, 1), (0, 1)), B((2, 3), (0, 1), (0, 1))))
    assert p1_filter(f) == (f, [])


def test_p1_containment_dropped():
    kept, dropped = p1_filter(BoxFamily((B((0, 4), (0, 4), (0, 4)), B((0, 2), (0, 4), (0, 4)))))
    assert dropped == [1]


def test_p1_exactly_half_is_kept():
    f = BoxFamily((B((0, 2), (0, 2), (0, 2)), B((1, 3), (0, 2), (0, 2))))
    assert p1_filter(f)[1] == []


def test_constants():
    assert chain_constant() == pytest.approx(1 + 30 * math.e / (math.sqrt(3) - 1))
    assert round(chain_constant(), 1) == 112.4
    assert exp_bound() == pytest.approx(6 * math.e)


def test_first_candidate_always_selected():
    res = cordoba_select(BoxFamily((B((0, 5), (0, 5), (0, 9)),)))
    assert res.selected == [0] and res.trace[0].avg == 1.0


def test_disjoint_family_ratio_one():
    f = BoxFamily(tuple(B((10 * i, 10 * i + 2), (0, 2), (0, 2)) for i in range(6)))
    res = select_family(f)
    assert sorted(res.selected) == list(range(6))
    assert res.constants["measure_ratio"] == 1.0
    rep = verify_selection(res, f)
    assert rep.ok and rep.constants["measure_ratio"] == 1.0


def dense_prior_family():
    # B's dilation covers A; both dilations cover C, so C's average is e^2 > 3
    return BoxFamily((
        B((0, 10), (0, 10), (0, 10)),
        B((10, 20), (0, 10), (0, 10)),
        B((9, 11), (4, 6), (4, 6)),
    ))


def test_sieve_rejects_dense_candidate():
    res = cordoba_select(dense_prior_family())
    assert res.selected == [0, 1] and res.rejected == [2]
    assert res.trace[1].avg == pytest.approx(math.e)
    assert res.trace[2].avg == pytest.approx(math.e**2)


def test_trace_histograms_match_raster():
    f = generate_zygmund_family(ExperimentConfig(seed=7, n_boxes=25, coordinate_range=20), 0)
    kept, _ = p1_filter(order_by_third_side(f))
    res = cordoba_select(kept)
    prior = []
    for t in res.trace:
        R = kept.boxes[t.index]
        assert dict(t.hist.counts) == raster_hist(R, prior, lo=-60, hi=80)
        avg = exp_integral(depth_histogram(R, prior)) / R.volume
        assert (avg <= 3) == t.accepted
        if t.accepted:
            prior.append(dilate(R, 3))


def test_split_classes_example():
    R = B((0, 2), (0, 2), (0, 2))
    prior = [B((0, 3), (0, 1), (0, 3)), B((0, 1), (0, 3), (0, 3)), B((0, 3), (0, 3), (0, 3))]
    s = split_classes(R, prior)
    assert (s.class1, s.class2, s.unclassified) == ([0, 2], [1], [])
    assert split_classes(R, []).class1 == []


def test_product_bound_class2_empty():
    R = B((0, 6), (0, 6), (0, 2))
    prior = [B((0, 6), (0, 1), (0, 2)), B((0, 6), (2, 3), (0, 2))]
    rep = product_bound_check(R, prior)
    assert rep.split.class2 == []
    assert rep.ok
    for (r, s), m in rep.joint.items():
        assert s == 0 and m == rep.class1_hist[r]


def test_product_bound_clean_crossing_holds():
    R = B((0, 12), (0, 12), (0, 4))
    class1 = [B((-4, 16), (1, 3), (-4, 8)), B((-4, 16), (5, 7), (-4, 8))]
    class2 = [B((2, 4), (-4, 16), (-4, 8))]
    rep = product_bound_check(R, class1 + class2, dilation=1)
    assert (rep.split.class1, rep.split.class2) == ([0, 1], [2])
    assert rep.marginals_ok
    assert rep.violations == []


def test_product_bound_series_keys():
    rep = product_bound_check(B((0, 2), (0, 2), (0, 2)), [])
    assert rep.series["product"] == 1.0
    assert rep.joint == {(0, 0): 8}


def test_all_selected_verifies():
    f = BoxFamily((B((0, 2), (0, 2), (0, 2)), B((40, 41), (0, 3), (0, 1))))
    rep = verify_selection(select_family(f), f)
    assert rep.ok
    assert rep.constants["measure_ratio"] == 1.0


def test_two_box_step_counterexample():
    prof = ZygmundProfile({(10, 10): 10, (1, 10): 10})
    f = BoxFamily((B((0, 10), (0, 10), (0, 10)), B((10, 11), (0, 10), (0, 10))), prof)
    res = select_family(f)
    assert res.selected == [0, 1]
    e = math.e
    assert res.trace[-1].Ik == pytest.approx(900 * e + 200 * e**2)
    rep = verify_selection(res, f)
    assert rep.ok
    assert not rep.diagnostics["induction_step"]["passed"]
    assert rep.diagnostics["induction_step_undilated"]["passed"]


def test_cumulative_counterexample():
    # later dilations raise the depth on earlier boxes, so the running sum bound can break
    f = generate_zygmund_family(ExperimentConfig(seed=8, n_boxes=6, coordinate_range=64), 0)
    res = select_family(f)
    rep = verify_selection(res, f)
    fail = rep.checks["induction_cumulative"]["failures"]
    assert [x["index"] for x in fail] == [2]
    assert fail[0]["Ik"] > fail[0]["rhs"]
    assert rep.checks["exp_integral_bound"]["passed"]


def test_selection_json_round_trip():
    f = generate_zygmund_family(ExperimentConfig(seed=3, n_boxes=30), 0)
    res = select_family(f)
    again = SelectionResult.from_json(res.to_json())
    assert again.to_json() == res.to_json()
    assert verify_selection(again, f).to_json() == verify_selection(res, f).to_json()


def test_selection_deterministic():
    f = generate_zygmund_family(ExperimentConfig(seed=5, n_boxes=40), 1)
    assert select_family(f).to_json() == select_family(f).to_json()


def test_tampered_trace_is_caught():
    f = generate_zygmund_family(ExperimentConfig(seed=9, n_boxes=40), 0)
    res = select_family(f)
    d = res.to_json()
    d["trace"][0]["avg"] = 0.5
    rep = verify_selection(SelectionResult.from_json(d), f)
    assert not rep.checks["sieve"]["passed"]
    assert rep.checks["sieve"]["failures"][0]["index"] == d["trace"][0]["index"]


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 40))
def test_selection_invariants(seed, n):
    f = generate_zygmund_family(ExperimentConfig(seed=seed, n_boxes=n, coordinate_range=64), 0)
    res = select_family(f)
    assert sorted(res.selected + res.rejected + res.dropped) == list(range(n))
    rep = verify_selection(res, f)
    # the dilated induction forms are known to fail on some families; see test_cumulative_counterexample
    for name in ("exp_integral_bound", "p1", "sieve", "measure_ratio", "rejected_chain"):
        assert rep.checks[name]["passed"], name
    assert rep.diagnostics["induction_step_undilated"]["passed"]
    iks = [t.Ik for t in res.trace]
    assert iks == sorted(iks)
    sel = union_measure([f.boxes[i] for i in res.selected])
    assert rep.constants["union_selected"] == sel
