"""Command line entry point.

Exit codes: 0 success, 1 usage error, 2 infeasible or failed validation,
3 solver failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import analysis
from .dag import build_graph
from .model import build_model
from .oracle import OracleError, enumerate_optimum
from .plan import PlanError, extract_plan, load_plan, plan_objective, save_plan, validate_plan
from .scenario import ScenarioError, generate_synthetic, load_scenario, save_scenario
from .solver import INFEASIBLE, BACKENDS, SolverError, SolveSettings, solve

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_SOLVER = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _solver_args(p):
    p.add_argument("--backend", choices=BACKENDS, default="external-command")
    p.add_argument("--solver-cmd", default=None,
                   help="template with {mps} {sol} {gap} {timelimit} {threads}; "
                        "falls back to $EVMAAS_SOLVER_CMD, then a CBC binary")
    p.add_argument("--gap", type=float, default=1e-4)
    p.add_argument("--timelimit", type=float, default=600.0)
    p.add_argument("--threads", type=int, default=1)


def _settings(args) -> SolveSettings:
    return SolveSettings(backend=args.backend, solver_command=args.solver_cmd,
                         mip_gap=args.gap, time_limit=args.timelimit, threads=args.threads)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="evmaas", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a synthetic scenario directory")
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--requests", type=int, required=True)
    g.add_argument("--vehicles", type=int, required=True)
    g.add_argument("--stations", type=int, required=True)
    g.add_argument("--profile", choices=["uniform", "bimodal"], default="bimodal")
    g.add_argument("--prices", choices=["flat", "two-level"], default="two-level")
    g.add_argument("--horizon", type=int, default=1440)
    g.add_argument("--area", type=float, default=10.0, help="side of the square, km")
    g.add_argument("--out", type=Path, required=True)

    s = sub.add_parser("solve", help="solve a scenario, write plan.csv and breakdown.csv")
    s.add_argument("--scenario", type=Path, required=True)
    s.add_argument("--out", type=Path, required=True)
    _solver_args(s)

    w = sub.add_parser("sweep", help="solve once per battery price (EUR/kWh of capacity)")
    w.add_argument("--scenario", type=Path, required=True)
    w.add_argument("--pbatt", default="0,25,50,100,150,200")
    w.add_argument("--out", type=Path, required=True)
    w.add_argument("--jobs", type=int, default=1)
    _solver_args(w)

    v = sub.add_parser("validate", help="re-check a plan against the scenario")
    v.add_argument("--plan", type=Path, required=True)
    v.add_argument("--scenario", type=Path, required=True)
    v.add_argument("--oracle", action="store_true",
                   help="also compare with the brute-force optimum (tiny scenarios)")

    r = sub.add_parser("report", help="grid power profile and degradation curve")
    r.add_argument("--plan", type=Path, required=True)
    r.add_argument("--scenario", type=Path, required=True)
    r.add_argument("--out", type=Path, required=True)
    r.add_argument("--bin", type=int, default=15, help="bin width, minutes")
    return parser


def _generate(args) -> int:
    sc = generate_synthetic(args.seed, args.requests, args.vehicles, args.stations,
                            args.profile, horizon=args.horizon, area_km=args.area,
                            price_pattern=args.prices)
    save_scenario(sc, args.out)
    print(f"wrote scenario with {sc.n_requests} requests to {args.out}")
    return EXIT_OK


def _solve(args) -> int:
    sc = load_scenario(args.scenario)
    graph = build_graph(sc)
    model = build_model(sc, graph)
    res = solve(model, _settings(args))
    print(f"status {res.status} objective {res.objective:.6f} bound {res.bound:.6f} "
          f"time {res.wall_time:.2f}s")
    if not res.has_solution:
        return EXIT_INFEASIBLE if res.status == INFEASIBLE else EXIT_SOLVER
    plan = extract_plan(model, res.values)
    problems = validate_plan(plan, sc, graph)
    args.out.mkdir(parents=True, exist_ok=True)
    save_plan(plan, args.out / "plan.csv")
    bd = analysis.profit_breakdown(plan, sc, graph)
    analysis.write_breakdown(bd, args.out / "breakdown.csv")
    print(f"served {bd.served_count}/{sc.n_requests}, profit {bd.profit:.2f} EUR")
    for p in problems:
        print(p)
    return EXIT_INFEASIBLE if problems else EXIT_OK


def _sweep(args) -> int:
    try:
        prices = [float(p) for p in args.pbatt.split(",") if p.strip()]
    except ValueError:
        raise SystemExit(_usage(f"bad --pbatt list {args.pbatt!r}"))
    if not prices:
        raise SystemExit(_usage("empty --pbatt list"))
    sc = load_scenario(args.scenario)
    rows = analysis.pareto_sweep(sc, prices, _settings(args), jobs=args.jobs)
    args.out.mkdir(parents=True, exist_ok=True)
    analysis.write_sweep(rows, args.out / "sweep.csv")
    for r in rows:
        print(f"p={r.p_batt_per_kwh:g} status={r.status} served={r.served_count} "
              f"discharged/veh={r.discharged_kwh_per_vehicle:.3f} "
              f"obj_excl_travel={r.objective_excl_travel:.4f}")
    failed = [r for r in rows if r.status not in ("optimal", "gap-feasible")]
    return EXIT_SOLVER if failed else EXIT_OK


def _usage(msg: str) -> int:
    print(f"evmaas: error: {msg}", file=sys.stderr)
    return EXIT_USAGE


def _validate(args) -> int:
    sc = load_scenario(args.scenario)
    graph = build_graph(sc)
    plan = load_plan(args.plan, sc.n_requests)
    problems = validate_plan(plan, sc, graph)
    plan_objective(plan, sc, graph)
    for p in problems:
        print(p)
    print(f"objective {plan.objective:.6f} ({len(problems)} violations)")
    if problems:
        return EXIT_INFEASIBLE
    if args.oracle:
        best, _ = enumerate_optimum(sc, graph)
        print(f"oracle optimum {best:.6f}")
        if plan.objective > best + 1e-6 * max(1.0, abs(best)):
            print("plan is not optimal")
            return EXIT_INFEASIBLE
    return EXIT_OK


def _report(args) -> int:
    sc = load_scenario(args.scenario)
    graph = build_graph(sc)
    plan = load_plan(args.plan, sc.n_requests, sc.fleet.n_vehicles)
    args.out.mkdir(parents=True, exist_ok=True)
    analysis.write_grid_profile(analysis.grid_profile(plan, graph, args.bin),
                                args.out / "grid_profile.csv")
    analysis.write_degradation_curve(sc.degradation, args.out / "degradation_curve.csv")
    print(f"wrote grid_profile.csv and degradation_curve.csv to {args.out}")
    return EXIT_OK


COMMANDS = {"generate": _generate, "solve": _solve, "sweep": _sweep,
            "validate": _validate, "report": _report}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return COMMANDS[args.command](args)
    except SystemExit as exc:
        return int(exc.code)
    except (ScenarioError, PlanError, OracleError, ValueError) as exc:
        print(f"evmaas: error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE if isinstance(exc, (PlanError, OracleError)) else EXIT_USAGE
    except SolverError as exc:
        print(f"evmaas: solver failure: {exc}", file=sys.stderr)
        if exc.raw_output:
            print(exc.raw_output[-2000:], file=sys.stderr)
        return EXIT_SOLVER


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
