import json
import subprocess
import sys
from pathlib import Path

import pytest

from covering_lab.cli import main
from covering_lab.experiment import Bundle, emit_report, render_report, run_experiment, section_rows
from covering_lab.families import ExperimentConfig

from test_measure import crossing_strips


def test_single_box_trial():
    b = run_experiment(ExperimentConfig(n_boxes=1, trial_count=1))
    s = b.trials[0].summary
    assert b.ok and s["selected"] == 1 and s["rejected"] == 0
    assert s["constants"]["measure_ratio"] == 1.0


def test_empty_bundle(tmp_path):
    sums = emit_report(Bundle(None), tmp_path)
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["trials"] == [] and summary["aggregate"]["trials"] == 0
    assert set(sums) == {"summary.json", "trials.csv"}


def test_bundle_reproducible(tmp_path):
    cfg = ExperimentConfig(seed=11, n_boxes=30, trial_count=3)
    a = emit_report(run_experiment(cfg), tmp_path / "a")
    b = emit_report(run_experiment(cfg), tmp_path / "b")
    assert a == b
    assert (tmp_path / "a" / "SHA256SUMS").read_bytes() == (tmp_path / "b" / "SHA256SUMS").read_bytes()


def test_trials_csv_shape():
    files = render_report(run_experiment(ExperimentConfig(seed=2, n_boxes=20, trial_count=2)))
    lines = files["trials.csv"].splitlines()
    assert lines[0].startswith("trial,n,selected")
    assert len(lines) == 3
    assert "section_trial_000.csv" in files


def test_failing_stage_dumps_fixture(monkeypatch):
    import covering_lab.experiment as ex

    def boom(*a, **k):
        raise RuntimeError("stage exploded")

    monkeypatch.setattr(ex, "verify_selection", boom)
    b = run_experiment(ExperimentConfig(seed=1, n_boxes=5, trial_count=1))
    t = b.trials[0]
    assert not b.ok and "stage exploded" in t.summary["error"]
    assert t.fixture["family"]["boxes"]
    assert "fixtures/trial_000.json" in render_report(b)


def test_crossing_strips_section_regions():
    region, c1, c2 = crossing_strips()
    rows = section_rows([c1, c2], 1, window=region, names=("r", "s"))
    labels = {(r["r"], r["s"]) for r in rows}
    assert {(1, 0), (0, 1), (1, 1), (0, 0)} <= labels
    area = sum((r["x1"] - r["x0"]) * (r["y1"] - r["y0"]) for r in rows)
    assert area == region.x.length * region.y.length


# ---------------------------------------------------------------------------
# CLI

def run_cli(*argv):
    return main([str(a) for a in argv])


def test_cli_generate_select_verify(tmp_path):
    fam, sel, ver = tmp_path / "f.json", tmp_path / "s.json", tmp_path / "v.json"
    assert run_cli("generate", "--seed", 42, "--n", 100, "--out", fam) == 0
    assert run_cli("select", fam, "--out", sel) == 0
    golden = json.loads((Path(__file__).parent / "golden" / "selection_seed42_n100.json").read_text())
    assert json.loads(sel.read_text()) == golden
    assert run_cli("verify", fam, sel, "--out", ver) == 0
    rep = json.loads(ver.read_text())
    assert rep["ok"] and rep["inclusion"]["ok"]


def test_cli_verify_exit_one_on_failure(tmp_path):
    fam, sel = tmp_path / "f.json", tmp_path / "s.json"
    run_cli("generate", "--seed", 9, "--n", 40, "--out", fam)
    run_cli("select", fam, "--out", sel)
    d = json.loads(sel.read_text())
    d["trace"][0]["avg"] = 0.5
    sel.write_text(json.dumps(d))
    assert run_cli("verify", fam, sel, "--out", tmp_path / "v.json") == 1


def test_cli_usage_errors(tmp_path, capsys):
    assert run_cli("select", tmp_path / "missing.json") == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run_cli("select", bad) == 2
    big = tmp_path / "big.json"
    big.write_text(json.dumps({"profile": None, "boxes": [{"x": [2**40 - 2, 2**40], "y": [0, 1], "z": [0, 1]}]}))
    assert run_cli("select", big) == 2
    assert "error" in capsys.readouterr().err
    with pytest.raises(SystemExit) as exc:
        run_cli("nonsense")
    assert exc.value.code == 2


def test_cli_experiment_and_config(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(ExperimentConfig(seed=5, n_boxes=15, trial_count=2).to_json()))
    code = run_cli("experiment", "--config", cfg, "--out", tmp_path / "out")
    agg = json.loads(capsys.readouterr().out)
    assert agg["trials"] == 2
    assert code == (0 if agg["passed"] == 2 else 1)
    assert (tmp_path / "out" / "SHA256SUMS").exists()


def test_cli_maximal_and_section(tmp_path, capsys):
    fam = tmp_path / "f.json"
    run_cli("generate", "--seed", 1, "--n", 20, "--out", fam)
    assert run_cli("maximal", fam, "--axis", 2, "--lam", 0.5) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["weak_type"]["ok"] and rep["axis"] == 2
    field = tmp_path / "field.json"
    field.write_text(json.dumps({"xs": [0, 1, 2, 3], "ys": [0, 1], "zs": [0, 1], "values": [[["0"]], [["1"]], [["0"]]], "exact": True}))
    assert run_cli("maximal", field, "--lam", 0.25) == 0
    assert json.loads(capsys.readouterr().out)["level_set_measure"] == 3
    assert run_cli("section", fam, "--z", 100) == 0
    assert capsys.readouterr().out.startswith("x0,x1,y0,y1,depth")


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "covering_lab", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "experiment" in out.stdout
