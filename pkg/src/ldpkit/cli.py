"""Command-line front end.

Subcommands:

* ``run <scenario>``         -- full pipeline; exit 0 iff every check listed
  under ``run =`` holds (``informational =`` checks never affect the exit
  status).
* ``free-energy <scenario>`` -- free-energy tables only.
* ``conjugate <in> <out> --dual-grid lo:hi:n`` -- file-level Legendre-Fenchel
  transform of a ``x,value`` CSV.
* ``reproduce <name>``       -- run a packaged scenario (``ge-ex`` or
  ``dem-zei``) and diff the report against the committed golden.
"""

from __future__ import annotations

import argparse
import json
import sys
from importlib import resources

import numpy as np

from .convex import GridFormatError, lf_transform, load_grid_csv, save_grid_csv
from .measures import MeasureFormatError
from .pipeline import golden_diff, run_free_energy, run_scenario
from .scenario import Scenario, ScenarioError, WindowConfig, load_scenario

REPRODUCE_NAMES = ("ge-ex", "dem-zei", "cramer")
GOLDEN_NAMES = ("ge-ex", "dem-zei")


def _packaged_path(kind: str, name: str):
    return resources.files("ldpkit").joinpath(f"data/{kind}/{name}")


def _apply_overrides(scenario: Scenario, args) -> Scenario:
    from dataclasses import replace

    if getattr(args, "tol", None) is not None:
        scenario = replace(
            scenario,
            tolerances=type(scenario.tolerances)(
                **{**vars(scenario.tolerances), "convergence": args.tol}
            ),
        )
    if getattr(args, "window", None) is not None:
        parts = args.window.split(":")
        if len(parts) != 3:
            raise ScenarioError("--window expects t_max:t_min:samples")
        new_window = WindowConfig(float(parts[0]), float(parts[1]), int(parts[2]))
        # a rate-window that was defaulted from [window] follows the override
        rate = new_window if scenario.rate_window == scenario.window else scenario.rate_window
        scenario = replace(scenario, window=new_window, rate_window=rate)
    return scenario


def _cmd_run(args) -> int:
    scenario = _apply_overrides(load_scenario(args.scenario), args)
    report, ok = run_scenario(scenario, out_dir=args.out_dir, threads=args.threads)
    for entry in report["checks"]:
        flag = "PASS" if entry["holds"] else "FAIL"
        note = " (informational)" if entry.get("informational") else ""
        print(f"[{flag}] {entry['condition_id']}{note}")
    for line in report["verdict"]["summary"]:
        print(f"verdict: {line}")
    return 0 if ok else 1


def _cmd_free_energy(args) -> int:
    scenario = _apply_overrides(load_scenario(args.scenario), args)
    report = run_free_energy(scenario, out_dir=args.out_dir, threads=args.threads)
    n = len(report["tables"]["L"]["xs"])
    print(f"L table with {n} grid points written for scenario {scenario.name!r}")
    return 0


def _parse_dual_grid(spec: str) -> np.ndarray:
    parts = spec.split(":")
    if len(parts) != 3:
        raise GridFormatError("--dual-grid expects lo:hi:n")
    lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
    if not lo < hi or n < 2:
        raise GridFormatError("--dual-grid needs lo < hi and n >= 2")
    return np.linspace(lo, hi, n)


def _cmd_conjugate(args) -> int:
    f = load_grid_csv(args.input, label="f")
    dual = _parse_dual_grid(args.dual_grid)
    out = lf_transform(f, dual)
    save_grid_csv(out, args.output)
    flagged = sum(out.meta.get("off_slope_range", []))
    print(f"wrote {args.output} ({out.xs.size} points, {flagged} beyond slope range)")
    return 0


def _cmd_reproduce(args) -> int:
    name = args.name
    scenario_path = _packaged_path("scenarios", f"{name}.cfg")
    with resources.as_file(scenario_path) as p:
        scenario = load_scenario(p)
    out_dir = args.out_dir or "."
    report, _ = run_scenario(scenario, out_dir=out_dir, threads=args.threads)

    if name not in GOLDEN_NAMES:
        print(f"scenario {name!r} has no committed golden; report written")
        return 0
    golden_path = _packaged_path("goldens", f"{name}.json")
    if args.update_golden:
        with resources.as_file(golden_path) as p:
            with open(p, "w", encoding="utf-8") as fh:
                json.dump(report, fh, indent=1, sort_keys=False)
                fh.write("\n")
        print(f"golden for {name} updated")
        return 0
    with resources.as_file(golden_path) as p:
        with open(p, "r", encoding="utf-8") as fh:
            golden = json.load(fh)
    diffs = golden_diff(report, golden)
    if diffs:
        print(f"golden mismatch for {name} ({len(diffs)} differences):")
        for line in diffs[:40]:
            print(f"  {line}")
        return 1
    print(f"{name}: report matches the committed golden")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ldpkit",
        description=(
            "Free-energy estimation, Legendre-Fenchel conjugation, and "
            "large-deviation rate-function checks for scaled measure nets."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out-dir", default=None, help="directory for CSV/JSON output")
        p.add_argument("--threads", type=int, default=1, help="worker threads")
        p.add_argument("--tol", type=float, default=None,
                       help="override the convergence tolerance")
        p.add_argument("--window", default=None,
                       help="override the main window as t_max:t_min:samples")

    p_run = sub.add_parser("run", help="run a scenario end to end")
    p_run.add_argument("scenario", help="path to a scenario .cfg file")
    common(p_run)
    p_run.set_defaults(fn=_cmd_run)

    p_fe = sub.add_parser("free-energy", help="free-energy tables only")
    p_fe.add_argument("scenario", help="path to a scenario .cfg file")
    common(p_fe)
    p_fe.set_defaults(fn=_cmd_free_energy)

    p_conj = sub.add_parser("conjugate", help="conjugate a grid-function CSV")
    p_conj.add_argument("input", help="input x,value CSV")
    p_conj.add_argument("output", help="output x,value CSV")
    p_conj.add_argument("--dual-grid", required=True, help="lo:hi:n")
    p_conj.set_defaults(fn=_cmd_conjugate)

    p_rep = sub.add_parser("reproduce", help="run a packaged scenario vs its golden")
    p_rep.add_argument("name", choices=REPRODUCE_NAMES,
                       help="one of: " + ", ".join(REPRODUCE_NAMES))
    p_rep.add_argument("--out-dir", default=None)
    p_rep.add_argument("--threads", type=int, default=1)
    p_rep.add_argument("--update-golden", action="store_true",
                       help="rewrite the committed golden from this run")
    p_rep.set_defaults(fn=_cmd_reproduce)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ScenarioError, GridFormatError, MeasureFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
