"""Desk-scale battery price sweep: 30 requests, 4 vehicles, 2 stations.

Writes sweep.csv plus the scenario directory under --out.
"""
import argparse
from pathlib import Path

from evmaas import analysis
from evmaas.scenario import generate_synthetic, save_scenario
from evmaas.solver import BACKENDS, SolveSettings


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=5)
    ap.add_argument("--requests", type=int, default=30)
    ap.add_argument("--vehicles", type=int, default=4)
    ap.add_argument("--stations", type=int, default=2)
    ap.add_argument("--pbatt", default="0,25,50,100,200")
    ap.add_argument("--backend", choices=BACKENDS, default="external-command")
    ap.add_argument("--gap", type=float, default=1e-4)
    ap.add_argument("--timelimit", type=float, default=150.0)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", type=Path, default=Path("results/desk_sweep"))
    args = ap.parse_args()

    sc = generate_synthetic(args.seed, args.requests, args.vehicles, args.stations, "bimodal")
    save_scenario(sc, args.out / "scenario")
    rows = analysis.pareto_sweep(
        sc, [float(p) for p in args.pbatt.split(",")],
        SolveSettings(backend=args.backend, mip_gap=args.gap, time_limit=args.timelimit),
        jobs=args.jobs)
    path = analysis.write_sweep(rows, args.out / "sweep.csv")
    for r in rows:
        print(f"p={r.p_batt_per_kwh:5g} {r.status:12s} served={r.served_count:3d} "
              f"charged/veh={r.charged_kwh_per_vehicle:7.2f} "
              f"discharged/veh={r.discharged_kwh_per_vehicle:7.2f} "
              f"obj_excl_travel={r.objective_excl_travel:9.4f} gap={r.abs_gap:.4f}")
    print(f"wrote {path}")


if __name__ == "__main__":
    main()
