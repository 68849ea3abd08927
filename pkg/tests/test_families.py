import pytest
from hypothesis import given, settings, strategies as st

from covering_lab.families import (
    ExperimentConfig,
    ProfileSpec,
    TrialRng,
    domination_failures,
    generate_adversarial_family,
    generate_family,
    generate_zygmund_family,
    random_monotone_profile,
)
from covering_lab.geometry import Box3, BoxFamily, validate_zygmund
from covering_lab.selection import select_family, verify_selection


def test_randint_bounds_and_stream():
    rng = TrialRng(1, 0)
    draws = [rng.randint(3, 5) for _ in range(300)]
    assert set(draws) == {3, 4, 5}
    a, b = TrialRng(1, 0), TrialRng(1, 0)
    assert [a.randint(0, 9) for _ in range(8)] == [b.randint(0, 9) for _ in range(8)]
    assert TrialRng(1, 0).raw() != TrialRng(1, 1).raw()
    with pytest.raises(ValueError):
        rng.randint(2, 1)


def test_rng_stream_is_pinned():
    # frozen once; a change here means golden files no longer reproduce
    rng = TrialRng(42, 0)
    assert [rng.randint(0, 999) for _ in range(5)] == [638, 312, 630, 688, 633]


def test_trivial_profile():
    spec = ProfileSpec(base_max=1, increment_max=0)
    f = generate_zygmund_family(ExperimentConfig(seed=3, n_boxes=40, profile=spec))
    assert {b.z.length for b in f.boxes} == {1}


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**64 - 1), st.integers(1, 60), st.integers(0, 5))
def test_generated_families_validate(seed, n, trial):
    cfg = ExperimentConfig(seed=seed, n_boxes=n, coordinate_range=128)
    f = generate_zygmund_family(cfg, trial)
    assert len(f) == n and validate_zygmund(f).ok
    assert all(0 <= iv.lo and iv.hi <= 128 for b in f.boxes for iv in (b.x, b.y, b.z))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_profile_monotone(seed):
    prof = random_monotone_profile(ProfileSpec(), TrialRng(seed))
    assert prof.monotonicity_violations() == []


def test_adversarial_example_chain():
    B = Box3.from_bounds
    f = BoxFamily((B((0, 8), (0, 8), (0, 8)), B((0, 8), (0, 4), (0, 4)), B((0, 2), (0, 8), (0, 2))))
    assert domination_failures(f) == []
    bad = BoxFamily((B((0, 2), (0, 2), (0, 2)), B((0, 8), (0, 8), (0, 1))))
    assert domination_failures(bad) == [(0, 1)]


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 3))
def test_adversarial_certificate_and_verification(seed, trial):
    cfg = ExperimentConfig(seed=seed, n_boxes=40, coordinate_range=128, family="adversarial")
    f = generate_adversarial_family(cfg, trial)
    assert domination_failures(f) == []
    rep = verify_selection(select_family(f), f)
    for name in ("exp_integral_bound", "p1", "sieve", "measure_ratio", "rejected_chain"):
        assert rep.checks[name]["passed"], name


def test_reproducible():
    cfg = ExperimentConfig(seed=42, n_boxes=50)
    assert generate_family(cfg, 3).to_json() == generate_family(cfg, 3).to_json()
    assert generate_family(cfg, 3).to_json() != generate_family(cfg, 4).to_json()


def test_config_round_trip():
    cfg = ExperimentConfig(seed=7, n_boxes=11, family="adversarial", profile=ProfileSpec(side_max=9))
    assert ExperimentConfig.from_json(cfg.to_json()) == cfg


def test_unknown_family_kind():
    with pytest.raises(ValueError):
        generate_family(ExperimentConfig(family="stress"))
