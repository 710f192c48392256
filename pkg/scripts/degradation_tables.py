"""Recompute the degradation rows of the two cost tables from the throughputs."""
import argparse

from evmaas import degradation as deg
from evmaas.degradation import DegradationParams

# (label, fleet size, charged kWh/day, discharged kWh/day, reported cost, reported lifetime)
ROWS = [
    ("fleet, unaware V2G", 70, 6050.0, 4190.0, 690.0, 405.0),
    ("fleet, no V2G", 70, 1780.0, 0.0, 120.0, 2360.0),
    ("per vehicle, unaware V2G", 1, 84.0, 57.0, 6.5, 418.0),
    ("per vehicle, aware V2G", 1, 47.0, 12.0, 4.0, 1000.0),
]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--p-batt", type=float, default=4000.0, help="battery price, EUR")
    args = ap.parse_args()
    p = DegradationParams(p_batt=args.p_batt)
    print(f"q_eol = {deg.q_eol(p):.0f} kWh, marginal cost {deg.marginal_cost(p):.4f} EUR/kWh")
    print(f"{'case':26s} {'cost':>9s} {'reported':>9s} {'life d':>8s} {'reported':>9s}")
    for label, n, ch, dis, cost_ref, life_ref in ROWS:
        q = ch + dis
        cost = deg.degradation_cost(p, q)
        life = deg.lifetime_days(p, q / n)
        print(f"{label:26s} {cost:9.2f} {cost_ref:9.1f} {life:8.0f} {life_ref:9.0f}")


if __name__ == "__main__":
    main()
