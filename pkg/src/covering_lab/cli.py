"""Command-line entry point.

Exit status: 0 when every check passes, 1 on a check failure, 2 on usage or I/O errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from .experiment import emit_report, run_experiment, section_rows
from .families import ExperimentConfig, generate_family
from .geometry import BoxFamily, CoordinateOverflowError, check_family_bounds, dilate
from .maximal import ScalarField3, exp_field, hl_maximal_1d, level_set_measure, rejected_inclusion_check, weak_type_check
from .measure import Grid3, compress, depth_field
from .selection import SelectionResult, product_bound_check, select_family, verify_selection

log = logging.getLogger("covering_lab")

EXIT_OK, EXIT_CHECK, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _read_json(path: str):
    try:
        if path == "-":
            return json.load(sys.stdin)
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"{path}: {exc}") from exc


def _write(text: str, out: str | None) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
        return
    try:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    except OSError as exc:
        raise UsageError(f"{out}: {exc}") from exc


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _load_family(path: str, dilation: int) -> BoxFamily:
    try:
        fam = BoxFamily.from_json(_read_json(path))
        check_family_bounds(fam, dilation)
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"{path}: bad family file ({exc})") from exc
    return fam


def _config_from_args(args) -> ExperimentConfig:
    if getattr(args, "config", None):
        try:
            cfg = ExperimentConfig.from_json(_read_json(args.config))
        except TypeError as exc:
            raise UsageError(f"{args.config}: {exc}") from exc
    else:
        cfg = ExperimentConfig()
    for flag, attr in (
        ("seed", "seed"), ("n", "n_boxes"), ("range", "coordinate_range"), ("threshold", "threshold"),
        ("dilation", "dilation"), ("c", "c"), ("trials", "trial_count"), ("family", "family"),
    ):
        v = getattr(args, flag, None)
        if v is not None:
            setattr(cfg, attr, v)
    return cfg


# ---------------------------------------------------------------------------
# subcommands

def cmd_generate(args) -> int:
    cfg = _config_from_args(args)
    fam = generate_family(cfg, args.trial)
    _write(_dump(fam.to_json()), args.out)
    return EXIT_OK


def cmd_select(args) -> int:
    fam = _load_family(args.family, args.dilation or 3)
    res = select_family(fam, args.threshold or 3.0, args.dilation or 3, args.c or 1.0, reorder=not args.no_reorder)
    _write(_dump(res.to_json()), args.out)
    return EXIT_OK


def cmd_verify(args) -> int:
    fam = _load_family(args.family, 3)
    try:
        res = SelectionResult.from_json(_read_json(args.result))
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"{args.result}: bad selection file ({exc})") from exc
    if any(i >= len(fam) for i in res.selected + res.rejected):
        raise UsageError("selection indices do not match the family")
    ver = verify_selection(res, fam)
    dilation = int(res.params.get("dilation", 3))
    c = float(res.params.get("c", 1.0))
    product = []
    k = 0
    for t in res.trace:
        if t.accepted:
            k += 1
            continue
        pb = product_bound_check(fam.boxes[t.index], [fam.boxes[i] for i in res.selected[:k]], dilation, c)
        product.append({"index": t.index, **pb.to_json()})
    inc = rejected_inclusion_check(res, fam)
    report = ver.to_json()
    report["product_bound"] = product
    report["inclusion"] = inc.to_json()
    report["ok"] = ver.ok and all(p["ok"] for p in product) and inc.ok
    _write(_dump(report), args.out)
    return EXIT_OK if report["ok"] else EXIT_CHECK


def _load_field(path: str, c: float, dilation: int) -> ScalarField3:
    d = _read_json(path)
    if "boxes" in d:
        fam = BoxFamily.from_json(d)
        boxes = [dilate(b, dilation) for b in fam.boxes]
        df = depth_field(boxes, compress(boxes))
        return exp_field(df.grid, df.depth, c)
    try:
        grid = Grid3(d["xs"], d["ys"], d["zs"])
        if d.get("exact"):
            vals = np.array([[[Fraction(v) for v in row] for row in plane] for plane in d["values"]], dtype=object)
        else:
            vals = np.asarray(d["values"], dtype=np.float64)
        return ScalarField3(grid, vals)
    except (KeyError, ValueError) as exc:
        raise UsageError(f"{path}: bad field file ({exc})") from exc


def cmd_maximal(args) -> int:
    f = _load_field(args.field, args.c or 1.0, args.dilation or 3)
    mf = hl_maximal_1d(f, args.axis)
    wt = weak_type_check(f, args.axis, args.lam, args.constant)
    report = {
        "axis": args.axis,
        "lambda": args.lam,
        "grid_shape": list(f.grid.shape),
        "level_set_measure": level_set_measure(mf, args.lam),
        "weak_type": wt.to_json(),
    }
    _write(_dump(report), args.out)
    return EXIT_OK if wt.ok else EXIT_CHECK


def cmd_experiment(args) -> int:
    cfg = _config_from_args(args)
    bundle = run_experiment(cfg)
    if not args.out:
        raise UsageError("experiment needs --out DIR")
    emit_report(bundle, args.out)
    agg = bundle.aggregate()
    log.info("trials=%d passed=%d errors=%d", agg["trials"], agg["passed"], agg["errors"])
    sys.stdout.write(_dump(agg))
    return EXIT_OK if bundle.ok else EXIT_CHECK


def cmd_section(args) -> int:
    dilation = args.dilation or 3
    fam = _load_family(args.family, dilation)
    idx = range(len(fam))
    if args.selection:
        idx = SelectionResult.from_json(_read_json(args.selection)).selected
    rows = section_rows([[dilate(fam.boxes[i], dilation) for i in idx]], args.z)
    cols = ["x0", "x1", "y0", "y1", "depth"]
    if args.out and args.out != "-":
        try:
            fh = open(args.out, "w", newline="")
        except OSError as exc:
            raise UsageError(f"{args.out}: {exc}") from exc
    else:
        fh = sys.stdout
    w = csv.DictWriter(fh, cols, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    if fh is not sys.stdout:
        fh.close()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="covering-lab", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, gen=False):
        sp.add_argument("--threshold", type=float)
        sp.add_argument("--dilation", type=int)
        sp.add_argument("--c", type=float)
        sp.add_argument("--out")
        if gen:
            sp.add_argument("--seed", type=int)
            sp.add_argument("--n", type=int)
            sp.add_argument("--range", type=int)
            sp.add_argument("--trials", type=int)
            sp.add_argument("--family", choices=("zygmund", "adversarial"))
            sp.add_argument("--config")

    sp = sub.add_parser("generate", help="write a random family as JSON")
    common(sp, gen=True)
    sp.add_argument("--trial", type=int, default=0, help="trial stream index")
    sp.set_defaults(func=cmd_generate)

    sp = sub.add_parser("select", help="order, P1-filter and sieve a family")
    sp.add_argument("family")
    sp.add_argument("--no-reorder", action="store_true", help="keep the file order instead of sorting by z-length")
    common(sp)
    sp.set_defaults(func=cmd_select)

    sp = sub.add_parser("verify", help="replay and check a selection")
    sp.add_argument("family")
    sp.add_argument("result")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("maximal", help="directional maximal function of a field")
    sp.add_argument("field", help="field JSON (xs, ys, zs, values) or a family JSON for its exp-field")
    sp.add_argument("--axis", type=int, choices=(1, 2, 3), default=1)
    sp.add_argument("--lam", "--lambda", dest="lam", type=float, default=3**0.5 - 1)
    sp.add_argument("--constant", type=float, default=5.0)
    common(sp)
    sp.set_defaults(func=cmd_maximal)

    sp = sub.add_parser("experiment", help="run seeded trials and write a report bundle")
    common(sp, gen=True)
    sp.set_defaults(func=cmd_experiment)

    sp = sub.add_parser("section", help="depth labels of an (x, y) section as CSV")
    sp.add_argument("family")
    sp.add_argument("--z", type=int, required=True, help="section through the slab [z, z+1]")
    sp.add_argument("--selection", help="only use the selected boxes of this result")
    common(sp)
    sp.set_defaults(func=cmd_section)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (UsageError, CoordinateOverflowError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
