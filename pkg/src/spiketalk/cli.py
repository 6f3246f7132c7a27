"""Command-line front end.

Exit codes: 0 success, 1 scenario/validation error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .engine import compare_baseline, run
from .export import emit_plot_data, export_csv, summary_text
from .grid import IntegrationError, SingularSystemError, steady_state_solve
from .scenario_file import ScenarioError, load_scenario

EXIT_OK, EXIT_SCENARIO, EXIT_RUNTIME = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spiketalk",
                                     description="Spiking-network droop co-simulator for DC microgrids")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out=True):
        p.add_argument("--scenario", required=True, nargs="+" if p.prog.endswith("validate") else None,
                       help="scenario file (bundled names such as appendix.scenario also work)")
        if out:
            p.add_argument("--out", default="out", help="output directory (default: ./out)")
        p.add_argument("--quiet", action="store_true", help="suppress progress output")

    def overrides(p):
        p.add_argument("--dt", type=float, help="override integration step (s)")
        p.add_argument("--duration", type=float,
                       help="override simulated duration (s); events after it are dropped")
        p.add_argument("--no-adapt", action="store_true", help="disable droop gain adaptation")

    p_run = sub.add_parser("run", help="simulate a scenario and export its trace")
    common(p_run)
    overrides(p_run)
    p_ss = sub.add_parser("steady-state", help="print the static droop equilibrium")
    common(p_ss, out=False)
    p_cmp = sub.add_parser("compare", help="run static and adaptive droop side by side")
    common(p_cmp)
    overrides(p_cmp)
    p_val = sub.add_parser("validate", help="check scenario files without running them")
    common(p_val, out=False)
    return parser


def _apply_overrides(sc, args):
    changes = {}
    if getattr(args, "dt", None) is not None:
        changes["dt"] = args.dt
    if getattr(args, "duration", None) is not None:
        changes["duration"] = args.duration
        # a shorter run is a prefix of the full one, so later events are dropped
        changes["timeline"] = tuple(ev for ev in sc.timeline if ev.time <= args.duration)
    if getattr(args, "no_adapt", False):
        changes["adaptation_enabled"] = False
    if not changes:
        return sc
    try:
        return replace(sc, **changes)
    except ValueError as exc:
        raise ScenarioError("override", str(exc)) from None


def _say(args, msg):
    if not args.quiet:
        print(msg)


def _cmd_run(args):
    sc = _apply_overrides(load_scenario(args.scenario), args)
    trace = run(sc)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = export_csv(trace, out / f"{sc.name}.csv")
    emit_plot_data(trace, out / f"{sc.name}_plots")
    _say(args, f"{len(trace)} windows -> {csv_path}")
    return EXIT_OK


def _cmd_steady(args):
    sc = load_scenario(args.scenario)
    state = steady_state_solve(sc.topology, sc.initial_gains, sc.objectives.v_ref)
    print("node v_volts i_amperes")
    for k, (v, i) in enumerate(zip(state.voltages, state.source_currents), start=1):
        print(f"{k} {float(v)!r} {float(i)!r}")
    return EXIT_OK


def _cmd_compare(args):
    sc = _apply_overrides(load_scenario(args.scenario), args)
    res = compare_baseline(sc)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for label, trace in (("static", res.static), ("adaptive", res.adaptive)):
        export_csv(trace, out / f"{sc.name}_{label}.csv")
        emit_plot_data(trace, out / f"{sc.name}_{label}_plots")
    with open(out / f"{sc.name}_summary.json", "w") as fh:
        json.dump(res.summary, fh, indent=2, default=lambda x: np.asarray(x).tolist())
    _say(args, summary_text(res.summary).rstrip())
    return EXIT_OK


def _cmd_validate(args):
    status = EXIT_OK
    for path in args.scenario:
        try:
            load_scenario(path)
            _say(args, f"ok: {path}")
        except (ScenarioError, FileNotFoundError) as exc:
            print(f"invalid: {path}: {exc}", file=sys.stderr)
            status = EXIT_SCENARIO
    return status


COMMANDS = {"run": _cmd_run, "steady-state": _cmd_steady, "compare": _cmd_compare,
            "validate": _cmd_validate}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ScenarioError, FileNotFoundError) as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_SCENARIO
    except (IntegrationError, SingularSystemError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
