"""Reporting: profit breakdown, grid power profile and battery-price sweeps.

All money and energy figures are recomputed from plan legs, never taken from a
solver objective.
"""
from __future__ import annotations

import csv
import dataclasses
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import degradation as deg
from .dag import TransitionGraph, build_graph
from .model import build_model
from .plan import FleetPlan, extract_plan, plan_objective, validate_plan
from .scenario import Scenario
from .solver import SolveSettings, SolverError, solve

MINUTES_PER_DAY = 1440


@dataclass
class ProfitBreakdown:
    travel_revenue: float = 0.0
    charging_cost: float = 0.0
    discharging_revenue: float = 0.0
    degradation_cost: float = 0.0
    profit: float = 0.0
    charged_kwh: float = 0.0
    discharged_kwh: float = 0.0
    served_count: int = 0
    avg_lifetime_days: float = math.inf

    def as_rows(self):
        return [(f.name, getattr(self, f.name)) for f in dataclasses.fields(self)]


def profit_breakdown(plan: FleetPlan, scenario: Scenario, graph: TransitionGraph,
                     deg_params: Optional[deg.DegradationParams] = None) -> ProfitBreakdown:
    """Daily totals of the plan. Lifetimes scale the horizon to a full day."""
    deg_params = deg_params or scenario.degradation
    revenue = sum(scenario.requests[j - 1].revenue for j in plan.served)
    charge_cost = discharge_rev = 0.0
    for _, _, leg in plan.legs():
        price = graph.window_price[leg.node_from, leg.node_to]
        charge_cost += price * leg.charged
        discharge_rev += price * leg.discharged
    charged, discharged = plan.charged_kwh, plan.discharged_kwh
    degr = deg.degradation_cost(deg_params, charged + discharged)
    n_veh = max(len(plan.vehicles), 1)
    per_vehicle_day = (charged + discharged) / n_veh * MINUTES_PER_DAY / scenario.horizon
    life = deg.lifetime_days(deg_params, per_vehicle_day) if per_vehicle_day > 0 else math.inf
    return ProfitBreakdown(
        travel_revenue=revenue,
        charging_cost=charge_cost,
        discharging_revenue=discharge_rev,
        degradation_cost=degr,
        profit=revenue - charge_cost + discharge_rev - degr,
        charged_kwh=charged,
        discharged_kwh=discharged,
        served_count=plan.served_count,
        avg_lifetime_days=life,
    )


def grid_profile(plan: FleetPlan, graph: TransitionGraph, bin_minutes: int = 15):
    """Average charge, discharge and net power (kW) per time bin.

    Each leg's exchange is spread evenly over its idle window, from the
    drop-off of the previous request to the pickup time of the next one.
    Returns an array with columns ``t_min, charge_kw, discharge_kw, net_kw``.
    """
    horizon = graph.horizon
    if bin_minutes <= 0 or horizon % bin_minutes:
        raise ValueError(f"bin of {bin_minutes} min does not divide horizon {horizon}")
    n_bins = horizon // bin_minutes
    edges = np.arange(n_bins + 1) * bin_minutes
    charge = np.zeros(n_bins)  # kWh per bin
    discharge = np.zeros(n_bins)
    for _, _, leg in plan.legs():
        if not leg.charge_kwh:
            continue
        lo, hi = graph.window(leg.node_from, leg.node_to)
        target = charge if leg.charge_kwh > 0 else discharge
        amount = abs(leg.charge_kwh)
        if hi - lo <= 0:
            target[min(int(lo // bin_minutes), n_bins - 1)] += amount
            continue
        overlap = np.clip(np.minimum(edges[1:], hi) - np.maximum(edges[:-1], lo), 0, None)
        target += amount * overlap / (hi - lo)
    hours = bin_minutes / 60.0
    ch, dis = charge / hours, discharge / hours
    return np.column_stack([edges[:-1], ch, dis, ch - dis])


@dataclass
class SweepRow:
    p_batt_per_kwh: float
    degradation_cost_per_vehicle_day: float = math.nan
    lifetime_days: float = math.nan
    objective_excl_travel: float = math.nan
    charged_kwh_per_vehicle: float = math.nan
    discharged_kwh_per_vehicle: float = math.nan
    served_count: int = -1
    status: str = ""
    objective: float = math.nan
    bound: float = math.nan

    @property
    def abs_gap(self) -> float:
        """Incumbent minus best bound (0 when the solver reports no bound)."""
        if math.isnan(self.bound):
            return 0.0
        return max(self.objective - self.bound, 0.0)


def _sweep_point(scenario: Scenario, graph: TransitionGraph, p_per_kwh: float,
                 settings: SolveSettings) -> SweepRow:
    params = dataclasses.replace(scenario.degradation,
                                 p_batt=p_per_kwh * scenario.fleet.e_max_kwh)
    model = build_model(scenario, graph, params)
    try:
        res = solve(model, settings)
    except SolverError as exc:
        return SweepRow(p_per_kwh, status=f"error: {exc}")
    if not res.has_solution:
        return SweepRow(p_per_kwh, status=res.status)
    plan = extract_plan(model, res.values)
    bd = profit_breakdown(plan, scenario, graph, params)
    n_veh = max(scenario.fleet.n_vehicles, 1)
    day = MINUTES_PER_DAY / scenario.horizon
    return SweepRow(
        p_batt_per_kwh=p_per_kwh,
        degradation_cost_per_vehicle_day=bd.degradation_cost / n_veh * day,
        lifetime_days=bd.avg_lifetime_days,
        objective_excl_travel=plan.j_elec + plan.j_batt,
        charged_kwh_per_vehicle=bd.charged_kwh / n_veh,
        discharged_kwh_per_vehicle=bd.discharged_kwh / n_veh,
        served_count=bd.served_count,
        status=res.status,
        objective=plan.objective,
        bound=res.bound,
    )


def pareto_sweep(scenario: Scenario, p_batt_list: Sequence[float],
                 settings: Optional[SolveSettings] = None, jobs: int = 1) -> list:
    """One solve per battery price (EUR per kWh of capacity), rows sorted by price."""
    if not p_batt_list:
        raise ValueError("empty price list")
    settings = settings or SolveSettings()
    graph = build_graph(scenario)
    prices = sorted(p_batt_list)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(lambda p: _sweep_point(scenario, graph, p, settings), prices))
    else:
        rows = [_sweep_point(scenario, graph, p, settings) for p in prices]
    return rows


# ---------------------------------------------------------------------------
# CSV writers
# ---------------------------------------------------------------------------

def write_breakdown(bd: ProfitBreakdown, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["metric", "value"])
        w.writerows(bd.as_rows())
    return path


def write_grid_profile(profile, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_min", "charge_kw", "discharge_kw", "net_kw"])
        for t, c, d, n in profile:
            w.writerow([int(t), c, d, n])
    return path


def write_sweep(rows, path) -> Path:
    path = Path(path)
    names = [f.name for f in dataclasses.fields(SweepRow)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for r in rows:
            w.writerow([getattr(r, n) for n in names])
    return path


def write_degradation_curve(params: deg.DegradationParams, path, n_points: int = 101) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["q_kwh", "drop_nonlinear", "drop_linear"])
        w.writerows(deg.degradation_curve(params, n_points))
    return path


def recompute(plan: FleetPlan, scenario: Scenario, graph: TransitionGraph, deg_params=None):
    """Objective parts and diagnostics of a plan read from disk."""
    plan_objective(plan, scenario, graph, deg_params)
    return validate_plan(plan, scenario, graph, deg_params)
