"""Command-line entry point: ``flatwing {solve,bench,sweep,grad-check,preset}``.

Machine-readable CSV goes to ``--out`` (or stdout); the human summary goes to
stderr. Exit codes: 0 success, 1 failed check, 2 infeasible, 3 invalid input.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import harness
from .errors import DegenerateEndpoints, FlatwingError, Infeasible, InitFailure, InvalidScenario
from .planner import solve
from .problem import SolverConfig

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_INFEASIBLE = 2
EXIT_INVALID = 3

PRESETS = {
    "penetration": (harness.penetration_scenario, SolverConfig),
    "two-cylinder": (harness.two_cylinder_scenario, harness.two_cylinder_config),
}


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
        _log(f"wrote {out}")
    else:
        sys.stdout.write(text)


def load(spec: str):
    """Scenario and config from a preset name or a scenario file."""
    if spec in PRESETS:
        make_sc, make_cfg = PRESETS[spec]
        return make_sc(), make_cfg()
    return harness.load_scenario(spec)


def cmd_solve(args) -> int:
    sc, config = load(args.scenario)
    if args.max_iter is not None:
        config = config.with_(max_iter=args.max_iter)
    try:
        sol = solve(sc, config)
    except Infeasible as exc:
        r = exc.solution.report
        _log(f"infeasible: {exc}")
        _log(f"iterations {r.iterations}, cpu {r.cpu_time:.3f} s")
        if args.out:
            Path(args.out).write_text(harness.export_trajectory(exc.solution.trajectory, sc, args.dt))
        return EXIT_INFEASIBLE
    r = sol.report
    _emit(harness.export_trajectory(sol.trajectory, sc, args.dt), args.out)
    _log(f"scenario   {sc.name or args.scenario}")
    _log(f"converged  {r.converged}  feasible {r.feasible}  ({r.status})")
    _log(f"N {r.N}  iterations {r.iterations}  first feasible {r.first_feasible_iter}  detour restarts {r.restarts}")
    _log(f"T {r.T:.3f} s  J {harness.physical_objective(sol):.4f} s  cpu {r.cpu_time:.3f} s")
    if sc.obstacles:
        _log(f"min surface distance {harness.min_surface_distance(sol.trajectory, sc):.1f} m (R_safe {sc.r_safe:g} m)")
    if not r.converged:
        _log("warning: feasible but not converged within the iteration budget")
    return EXIT_OK


def cmd_bench(args) -> int:
    config = SolverConfig() if args.max_iter is None else SolverConfig(max_iter=args.max_iter)
    groups = range(1, args.groups + 1)
    results = harness.run_bench(groups, args.runs, config, seed=args.seed, jobs=args.jobs)
    _emit(harness.write_csv(results), args.out)
    agg = harness.aggregate(results)
    if args.summary_out:
        harness.write_csv(agg, args.summary_out)
    _log(f"{'group':>5} {'obst':>6} {'success':>8} {'cpu mean':>9} {'cpu p90':>8} {'J mean':>9}")
    for row in agg:
        _log(f"{row['group']:>5} {row['n_obstacles_mean']:>6.1f} {row['success_rate']:>8.2%} "
             f"{row['cpu_mean']:>9.3f} {row['cpu_p90']:>8.3f} {row['objective_mean']:>9.2f}")  # fmt: skip
    return EXIT_OK


def cmd_sweep(args) -> int:
    sc, config = load(args.scenario)
    rows = harness.sweep(args.param, args.values, sc, config)
    _emit(harness.write_csv(rows), args.out)
    _log(f"{args.param:>10} {'J (s)':>9} {'Q (s)':>9} {'E':>11} {'X_obs':>9} {'cpu':>7} {'conv':>5}")
    for r in rows:
        _log(f"{r.value:>10.4g} {r.J:>9.3f} {r.Q:>9.3f} {r.E:>11.4g} {r.x_obs:>9.3g} {r.cpu_time:>7.3f} {str(r.converged):>5}")
    return EXIT_OK


def cmd_grad_check(args) -> int:
    rows = harness.grad_check(args.samples, args.seed, args.h)
    _emit(harness.write_csv(rows), args.out)
    worst = max(rows, key=lambda r: r.rel_error)
    n_bad = sum(r.rel_error > args.tol for r in rows)
    _log(f"{len(rows)} instances, worst relative error {worst.rel_error:.3e} (sample {worst.sample}, N={worst.N}), "
         f"{n_bad} above {args.tol:g}")  # fmt: skip
    return EXIT_OK if n_bad == 0 else EXIT_FAILED


def cmd_preset(args) -> int:
    sc, config = load(args.name)
    harness.save_scenario(args.out, sc, config)
    _log(f"wrote {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flatwing", description="Flatness-based fixed-wing trajectory optimization")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve a scenario file or preset and export the trajectory CSV")
    p.add_argument("scenario", help=f"scenario JSON file or preset ({', '.join(PRESETS)})")
    p.add_argument("--out", help="trajectory CSV path (default stdout)")
    p.add_argument("--dt", type=float, default=1.0, help="export sample spacing in seconds")
    p.add_argument("--max-iter", type=int, default=None)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("bench", help="Monte Carlo runs over random obstacle groups")
    p.add_argument("--groups", type=int, default=8, help="number of groups, group i spans (5 + 2.5 i) km")
    p.add_argument("--runs", type=int, default=100, help="runs per group")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("--max-iter", type=int, default=None)
    p.add_argument("--out", help="per-run CSV path (default stdout)")
    p.add_argument("--summary-out", help="per-group aggregate CSV path")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("sweep", help="re-solve a scenario over a parameter grid")
    p.add_argument("--param", required=True, choices=sorted(harness.SWEEP_PARAMS))
    p.add_argument("--values", required=True, type=float, nargs="+")
    p.add_argument("--scenario", default="two-cylinder", help="scenario JSON file or preset")
    p.add_argument("--out", help="sweep CSV path (default stdout)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("grad-check", help="analytic gradient against central differences")
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--h", type=float, default=1e-6, help="finite-difference step")
    p.add_argument("--tol", type=float, default=1e-5)
    p.add_argument("--out", help="CSV path (default stdout)")
    p.set_defaults(func=cmd_grad_check)

    p = sub.add_parser("preset", help="write a preset scenario to a JSON file")
    p.add_argument("name", choices=sorted(PRESETS))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_preset)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InvalidScenario, DegenerateEndpoints) as exc:
        _log(f"invalid input: {exc}")
        return EXIT_INVALID
    except InitFailure as exc:
        _log(f"initialization failed: {exc}")
        return EXIT_INFEASIBLE
    except FlatwingError as exc:
        _log(f"error: {exc}")
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
