"""Command-line interface: ``svocontrol <command> [options]``.

Commands
--------
simulate     solve one scenario, write trajectories.csv, metrics.json, report.json
baseline     replay the scenario with zero additive control
sweep        solve for several SVO angles and print a comparison table
gradcheck    compare adjoint gradients with finite differences on random problems
convergence  print the J3 value of every solver iteration
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from pathlib import Path

from . import __version__
from .config import ConfigError, load_config, scenario_from_dict, window_from_dict
from .gradcheck import RTOL, run_gradcheck
from .metrics import compute_metrics, export_trajectories, sweep_svo, write_json
from .pmp import solve
from .scenario import pair_problem, run_baseline, run_scenario
from .vehicle_models import CollisionError

log = logging.getLogger("svocontrol")


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _window(text: str) -> tuple[float, float]:
    vals = _floats(text)
    if len(vals) != 2:
        raise argparse.ArgumentTypeError("window must be A,B")
    return vals[0], vals[1]


def _load(args):
    if args.config is None:
        scenario = scenario_from_dict({}, dt=args.dt)
        window = window_from_dict({})
    else:
        scenario, window = load_config(args.config, dt=args.dt)
    if getattr(args, "window", None) is not None:
        window = args.window
    return scenario, window


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args) -> int:
    scenario, window = _load(args)
    result = run_scenario(scenario)
    base = run_baseline(scenario)
    metrics = compute_metrics(result, window)
    metrics.compare_to(compute_metrics(base, window))
    out = _out_dir(args)
    export_trajectories(result, out / "trajectories.csv")
    doc = metrics.to_dict()
    doc["percent_change_base"] = "zero-control baseline"
    write_json(doc, out / "metrics.json")
    report = result.report.to_dict()
    report.update(objective=result.objective, baseline_objective=base.objective, phi=result.phi)
    write_json(report, out / "report.json")
    r = result.report
    print(f"phi={result.phi:.4f}  J3={result.objective:.6f}  (baseline {base.objective:.6f})  "
          f"{r.iterations} iterations, {r.stop_reason.value}")
    print(f"|U_AV|={metrics.abs_payoff_self:.4f}  wrote {out}")
    return 0


def cmd_baseline(args) -> int:
    scenario, window = _load(args)
    result = run_baseline(scenario)
    metrics = compute_metrics(result, window)
    out = _out_dir(args)
    export_trajectories(result, out / "trajectories.csv")
    write_json(metrics.to_dict(), out / "metrics.json")
    write_json({"baseline": True, "objective": result.objective, "phi": result.phi}, out / "report.json")
    print(f"baseline J3={result.objective:.6f}  |U_AV|={metrics.abs_payoff_self:.4f}  wrote {out}")
    return 0


def cmd_sweep(args) -> int:
    scenario, window = _load(args)
    phis = args.phis or [0.1, math.pi / 4, math.pi / 2]
    base = args.base if args.base is not None else phis[0]
    sweep = sweep_svo(scenario, phis, base, window, workers=args.workers)
    print(sweep.table())
    if args.out:
        out = _out_dir(args)
        write_json(sweep.to_dict(), out / "sweep.json")
        for entry in sweep.entries:
            export_trajectories(entry.result, out / f"trajectories_phi_{entry.phi:.4f}.csv")
    return 0


def cmd_gradcheck(args) -> int:
    check = run_gradcheck(seed=args.seed, n_scenarios=args.scenarios)
    status = "PASS" if check.passed else "FAIL"
    print(f"max relative error {check.max_rel_error:.3e} over {check.n_scenarios} scenarios "
          f"(seed {check.seed}, tolerance {RTOL:g}): {status}")
    return 0 if check.passed else 1


def cmd_convergence(args) -> int:
    scenario, _ = _load(args)
    solution = solve(pair_problem(scenario), scenario.solver)
    r = solution.report
    for i, j3 in enumerate(r.history, start=1):
        print(f"{i:4d}  {j3:.10f}")
    print(f"{r.stop_reason.value} after {r.iterations} iterations; best J3={solution.objective:.10f} "
          f"at iteration {r.best_iteration}")
    if args.out:
        out = _out_dir(args)
        with open(out / "convergence.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iteration", "J3"])
            for i, j3 in enumerate(r.history, start=1):
                w.writerow([i, repr(j3)])
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="svocontrol", description="SVO-weighted eco-driving control of an AV in a mixed platoon")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = parser.add_subparsers(dest="command", required=True)

    def scenario_opts(p, out_required):
        p.add_argument("--config", metavar="PATH", help="scenario JSON (default: built-in five-vehicle preset)")
        p.add_argument("--out", metavar="DIR", required=out_required, help="output directory")
        p.add_argument("--window", type=_window, metavar="A,B", help="analysis window in seconds")
        p.add_argument("--dt", type=float, metavar="FLOAT", help="override the grid step")

    scenario_opts(sub.add_parser("simulate", help="solve and simulate one scenario"), True)
    scenario_opts(sub.add_parser("baseline", help="simulate with zero additive control"), True)
    p = sub.add_parser("sweep", help="compare several SVO angles")
    scenario_opts(p, False)
    p.add_argument("--phis", type=_floats, metavar="LIST", help="comma-separated SVO angles (rad)")
    p.add_argument("--base", type=float, metavar="FLOAT", help="angle used as the comparison base")
    p.add_argument("--workers", type=int, default=1, help="parallel scenario runs")
    p = sub.add_parser("gradcheck", help="adjoint vs finite-difference gradient check")
    p.add_argument("--seed", type=int, default=7, metavar="INT")
    p.add_argument("--scenarios", type=int, default=20)
    p = sub.add_parser("convergence", help="J3 per solver iteration")
    scenario_opts(p, False)
    return parser


COMMANDS = {
    "simulate": cmd_simulate,
    "baseline": cmd_baseline,
    "sweep": cmd_sweep,
    "gradcheck": cmd_gradcheck,
    "convergence": cmd_convergence,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, CollisionError, ValueError, OSError, FloatingPointError, RuntimeError) as err:
        print(f"svocontrol {args.command}: error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
