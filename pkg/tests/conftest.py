import numpy as np
import pytest

from evmaas.degradation import DegradationParams
from evmaas.scenario import (
    ChargingStation,
    FleetSpec,
    PriceSeries,
    Scenario,
    TravelRequest,
    generate_synthetic,
)
from evmaas.solver import find_cbc


def tiny_scenario(seed: int) -> Scenario:
    """Random instance within the oracle limits (<=4 requests, <=2 vehicles, <=1 station).

    Battery size, initial energy, consumption, battery price, charger power and
    price levels all vary so that energy limits, V2G and rejection get exercised.
    """
    rng = np.random.default_rng(1000 + seed)
    n = int(rng.integers(1, 5))
    K = int(rng.integers(1, 3))
    C = int(rng.random() < 0.9)
    e_max = float(rng.choice([8.0, 15.0, 40.0]))
    fleet = FleetSpec(
        e_max_kwh=e_max,
        e0_kwh=round(float(rng.uniform(0, e_max)), 3),
        econ_kwh_per_km=float(rng.choice([0.15, 0.4, 0.8])),
        speed_kmh=float(rng.choice([20.0, 30.0])),
        allow_v2g=bool(rng.random() < 0.8),
    )
    deg = DegradationParams(p_batt=float(rng.choice([0.0, 500.0, 1000.0, 4000.0])))
    return generate_synthetic(
        seed, n, K, C, str(rng.choice(["uniform", "bimodal"])),
        horizon=int(rng.choice([600, 1440])),
        area_km=float(rng.choice([6.0, 10.0])),
        price_pattern="two-level",
        day_price=float(rng.choice([0.16, 0.30])),
        fleet=fleet, degradation=deg,
        station_power_kw=float(rng.choice([7.0, 22.0])),
    )


def line_scenario(requests, stations=(), *, n_vehicles=1, horizon=600, price=0.0,
                  p_batt=0.0, **fleet_kw) -> Scenario:
    """Hand-built scenario on the x axis with the depot at the origin.

    ``requests`` holds ``(origin_x, dest_x, t, revenue)`` tuples; stations are
    x positions. Straight-line distances (detour factor 1), 60 km/h so that
    one km takes one minute.
    """
    fleet = FleetSpec(**{"n_vehicles": n_vehicles, "speed_kmh": 60.0, "detour_factor": 1.0,
                         "e0_kwh": 20.0, **fleet_kw})
    reqs = tuple(TravelRequest(n + 1, (o, 0.0), (d, 0.0), t, rev)
                 for n, (o, d, t, rev) in enumerate(requests))
    sts = tuple(ChargingStation(c, (x, 0.0), 22.0) for c, x in enumerate(stations))
    prices = price if isinstance(price, PriceSeries) else PriceSeries.flat(price, horizon)
    return Scenario(reqs, sts, fleet, prices, horizon, DegradationParams(p_batt=p_batt))


requires_cbc = pytest.mark.skipif(find_cbc() is None, reason="no CBC executable available")


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion."""
    lines = []
    for outcome in ("passed", "failed", "error", "skipped"):
        for rep in terminalreporter.stats.get(outcome, []):
            props = dict(getattr(rep, "user_properties", []))
            if "criterion" in props and getattr(rep, "when", "call") in ("call", "setup"):
                if outcome == "passed" and rep.when != "call":
                    continue
                word = {"passed": "PASS", "skipped": "SKIP"}.get(outcome, "FAIL")
                lines.append((props["criterion"], f"{word} criterion {props['criterion']}"))
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
