"""Command-line entry point: ``dampnav <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 invalid scenario, 3 runtime failure.
A collision is a recorded outcome, not a failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .analysis import check_assumptions, find_equilibria
from .controllers import kd_lower_bound
from .errors import DampNavError, ParseError, ValidationError
from .scenario_io import (
    bundled_scenarios,
    load_scenario,
    read_trajectory_csv,
    write_plot_data,
    write_trajectory_csv,
)
from .simulation import batch_run

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2, 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


def _parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="dampnav", description="Damped second-order navigation: simulation and analysis.")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("simulate", help="run one start of a scenario and write its CSV")
    p.add_argument("--scenario", required=True, help="scenario JSON path or bundled name")
    p.add_argument("--out", help="output directory (default: the scenario's outputs field)")
    p.add_argument("--start", type=int, default=0, help="start index (default 0)")

    p = sub.add_parser("batch", help="run every start of a scenario")
    p.add_argument("--scenario", required=True)
    p.add_argument("--out")
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("equilibria", help="locate planner equilibria and classify them")
    p.add_argument("--scenario", required=True)
    p.add_argument("--grid", type=int, default=20, help="seeds per axis")

    p = sub.add_parser("kd-bound", help="k_d lower bound from the planner Jacobian at the target")
    p.add_argument("--scenario", required=True)

    p = sub.add_parser("check-assumptions", help="empirical boundary-shell diagnostics")
    p.add_argument("--scenario", required=True)
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--delta-d", type=float, help="shell width (default: world delta_u)")

    p = sub.add_parser("plot-data", help="convert trajectory CSVs to per-figure column files")
    p.add_argument("csv", nargs="+", help="trajectory CSV files")
    p.add_argument("--out", default="plot-data")

    sub.add_parser("list", help="list bundled scenarios")
    return ap


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2))


def _metrics_dict(res) -> dict:
    out = {"start": res.index}
    if res.error:
        out["error"] = res.error
        return out
    out["outcome"] = res.trajectory.outcome.value
    out.update(res.metrics._asdict())
    return out


def _out_dir(args, scenario) -> Path:
    return Path(args.out) if args.out else Path(scenario.outputs)


def _simulate(args) -> int:
    sc = load_scenario(args.scenario)
    starts = sc.resolved_starts()
    if not 0 <= args.start < len(starts):
        raise _UsageError(f"--start must be in [0, {len(starts) - 1}]")
    res = batch_run(sc, [starts[args.start]])[0]
    res.index = args.start
    if res.error:
        raise DampNavError(res.error)
    path = _out_dir(args, sc) / f"{sc.name}_start{args.start}.csv"
    write_trajectory_csv(res.trajectory, path)
    info = _metrics_dict(res)
    info["csv"] = str(path)
    _emit(info)
    return EXIT_OK


def _batch(args) -> int:
    sc = load_scenario(args.scenario)
    results = batch_run(sc, workers=args.workers)
    out = _out_dir(args, sc)
    summary = []
    for res in results:
        info = _metrics_dict(res)
        if res.trajectory is not None:
            path = out / f"{sc.name}_start{res.index}.csv"
            write_trajectory_csv(res.trajectory, path)
            info["csv"] = str(path)
        summary.append(info)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{sc.name}_summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    _emit(summary)
    return EXIT_RUNTIME if any(r.error for r in results) else EXIT_OK


def _equilibria(args) -> int:
    sc = load_scenario(args.scenario)
    planner = sc.build_planner()
    eqs = find_equilibria(planner, sc.world, grid_n=args.grid, cfg=sc.controller)
    _emit({
        "scenario": sc.name,
        "controller": sc.controller.kind.value,
        "seeds": eqs.n_seeds,
        "failed_seeds": eqs.n_failed,
        "equilibria": [e.to_dict() for e in eqs],
    })
    return EXIT_OK


def _kd_bound(args) -> int:
    sc = load_scenario(args.scenario)
    planner = sc.build_planner()
    res = kd_lower_bound(planner.jacobian(planner.target))
    _emit({"g_max": res.g_max, "r_max": res.r_max, "bound": res.bound, "k_d": sc.controller.k_d})
    return EXIT_OK


def _check_assumptions(args) -> int:
    sc = load_scenario(args.scenario)
    delta_d = sc.world.delta_u if args.delta_d is None else args.delta_d
    rep = check_assumptions(sc.build_planner(), sc.world, delta_d, args.samples, args.seed)
    _emit(rep.to_dict())
    return EXIT_OK


def _plot_data(args) -> int:
    written = []
    for name in args.csv:
        traj = read_trajectory_csv(name)
        written += [str(p) for p in write_plot_data(traj, args.out, Path(name).stem)]
    _emit({"files": written})
    return EXIT_OK


_COMMANDS = {
    "simulate": _simulate,
    "batch": _batch,
    "equilibria": _equilibria,
    "kd-bound": _kd_bound,
    "check-assumptions": _check_assumptions,
    "plot-data": _plot_data,
    "list": lambda args: (_emit(bundled_scenarios()), EXIT_OK)[1],
}


def main(argv=None) -> int:
    ap = _parser()
    try:
        args = ap.parse_args(argv)
        if args.command is None:
            ap.print_usage(sys.stderr)
            return EXIT_USAGE
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, ValidationError) as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (DampNavError, OSError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


cli = main

if __name__ == "__main__":
    sys.exit(main())
