"""Decoded fleet schedules, their objective parts and constraint re-checks."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from . import degradation as deg
from .dag import TransitionGraph
from .model import MILPModel, parse_name
from .scenario import Scenario

INT_TOL = 1e-6
ENERGY_TOL = 1e-6


class PlanError(ValueError):
    pass


@dataclass
class Leg:
    node_from: int
    node_to: int
    stations: tuple = ()
    charge_kwh: float = 0.0  # signed, positive = charging
    arrival_energy_kwh: float = 0.0

    @property
    def charged(self) -> float:
        return max(self.charge_kwh, 0.0)

    @property
    def discharged(self) -> float:
        return max(-self.charge_kwh, 0.0)


@dataclass
class FleetPlan:
    n_requests: int
    vehicles: list  # list[list[Leg]]
    j_trav: float = 0.0
    j_elec: float = 0.0
    j_batt: float = 0.0
    served_flags: list = field(default_factory=list)

    @property
    def sink(self) -> int:
        return self.n_requests + 1

    @property
    def served(self) -> list:
        return sorted({leg.node_to for legs in self.vehicles for leg in legs
                       if 1 <= leg.node_to <= self.n_requests})

    @property
    def served_count(self) -> int:
        return len(self.served)

    @property
    def charged_kwh(self) -> float:
        return sum(leg.charged for legs in self.vehicles for leg in legs)

    @property
    def discharged_kwh(self) -> float:
        return sum(leg.discharged for legs in self.vehicles for leg in legs)

    @property
    def objective(self) -> float:
        return self.j_trav + self.j_elec + self.j_batt

    def chains(self) -> list:
        return [[legs[0].node_from] + [leg.node_to for leg in legs] if legs else []
                for legs in self.vehicles]

    def legs(self):
        for k, legs in enumerate(self.vehicles):
            for n, leg in enumerate(legs):
                yield k, n, leg


def plan_objective(plan: FleetPlan, scenario: Scenario, graph: TransitionGraph,
                   deg_params: Optional[deg.DegradationParams] = None) -> FleetPlan:
    """Fill in ``j_trav``, ``j_elec`` and ``j_batt`` from the plan's legs."""
    deg_params = deg_params or scenario.degradation
    served = plan.served
    plan.j_trav = -sum(scenario.requests[j - 1].revenue for j in served)
    plan.j_elec = sum(graph.window_price[leg.node_from, leg.node_to] * leg.charge_kwh
                      for _, _, leg in plan.legs() if leg.charge_kwh)
    throughput = sum(abs(leg.charge_kwh) for _, _, leg in plan.legs())
    plan.j_batt = deg.degradation_cost(deg_params, throughput)
    plan.served_flags = [j in set(served) for j in range(1, plan.n_requests + 1)]
    return plan


def extract_plan(model: MILPModel, values) -> FleetPlan:
    """Follow the transition variables from node 0 to node I+1 per vehicle."""
    if model.scenario is None or model.graph is None:
        raise PlanError("model carries no scenario/graph context")
    x = model.as_vector(values)
    scenario, graph = model.scenario, model.graph
    n_req = scenario.n_requests
    sink = n_req + 1
    K = scenario.fleet.n_vehicles

    succ = [dict() for _ in range(K)]
    stations, charge = {}, {}
    for v, name in enumerate(model.names):
        kind, idx = parse_name(name)
        val = x[v]
        if kind == "X":
            if abs(val - round(val)) > INT_TOL:
                raise PlanError(f"{name}={val} is not integral")
            if round(val) == 1:
                i, j, k = idx
                if i in succ[k]:
                    raise PlanError("solution violates Eqs. (4)-(6): "
                                    f"vehicle {k} leaves node {i} twice")
                succ[k][i] = j
        elif kind == "S":
            if abs(val - round(val)) > INT_TOL:
                raise PlanError(f"{name}={val} is not integral")
            if round(val) == 1:
                i, j, k, c = idx
                stations.setdefault((i, j, k), []).append(c)
        elif kind in ("Cp", "Cm"):
            i, j, k, c = idx
            sign = 1.0 if kind == "Cp" else -1.0
            charge[(i, j, k)] = charge.get((i, j, k), 0.0) + sign * val

    vehicles = []
    seen = set()
    for k in range(K):
        legs, node = [], 0
        e = scenario.fleet.e0_kwh
        while node != sink:
            if node not in succ[k] or len(legs) > n_req + 1:
                raise PlanError(f"solution violates Eqs. (4)-(6): broken chain for vehicle {k}")
            nxt = succ[k][node]
            if 1 <= nxt <= n_req:
                if nxt in seen:
                    raise PlanError(f"solution violates Eqs. (4)-(6): request {nxt} served twice")
                seen.add(nxt)
            q = charge.get((node, nxt, k), 0.0)
            q = 0.0 if abs(q) < 1e-12 else q
            st = tuple(sorted(stations.get((node, nxt, k), ())))
            detour = sum(graph.detour_dist[node, nxt, c] for c in st)
            e = e - graph.leg_energy[node, nxt] - detour * scenario.fleet.econ_kwh_per_km + q
            legs.append(Leg(node, nxt, st, q, e))
            node = nxt
        vehicles.append(legs)
    plan = FleetPlan(n_req, vehicles)
    return plan_objective(plan, scenario, graph, model.deg_params)


def validate_plan(plan: FleetPlan, scenario: Scenario, graph: TransitionGraph,
                  deg_params=None, tol: float = ENERGY_TOL) -> list:
    """Re-check every scheduling constraint directly on the plan.

    Each diagnostic starts with the tag of the violated constraint family,
    e.g. ``"Eq. (11): ..."``. An empty list means the plan is feasible.
    """
    out = []
    fleet = scenario.fleet
    n_req, sink = scenario.n_requests, scenario.n_requests + 1
    n_nodes = n_req + 2

    if plan.n_requests != n_req:
        return [f"Eq. (6): plan covers {plan.n_requests} requests, scenario has {n_req}"]
    if len(plan.vehicles) != fleet.n_vehicles:
        out.append(f"Eq. (6): {len(plan.vehicles)} schedules for {fleet.n_vehicles} vehicles")

    left = {}
    for k, legs in enumerate(plan.vehicles):
        if not legs:
            out.append(f"Eq. (6): vehicle {k} has no schedule")
            continue
        if legs[0].node_from != 0:
            out.append(f"Eq. (6): vehicle {k} does not start at the depot")
        if legs[-1].node_to != sink:
            out.append(f"Eq. (6): vehicle {k} does not end at the depot")
        departed = {legs[0].node_from}
        for a, b in zip(legs, legs[1:]):
            # a second departure from a request is reported below under its own tag
            if a.node_to != b.node_from and not (b.node_from in departed
                                                 and 1 <= b.node_from <= n_req):
                out.append(f"Eq. (6): vehicle {k} jumps from {a.node_to} to {b.node_from}")
            departed.add(b.node_from)
        for leg in legs:
            if 1 <= leg.node_from <= n_req:
                left.setdefault(leg.node_from, []).append(k)
    n_entered = {}
    for legs in plan.vehicles:
        for leg in legs:
            n_entered[leg.node_to] = n_entered.get(leg.node_to, 0) + 1
    for j in sorted(n_entered):
        if 1 <= j <= n_req and n_entered[j] > 1:
            out.append(f"Eq. (4): request {j} served {n_entered[j]} times")
    for i in sorted(left):
        # a request served twice is necessarily left twice; report the cause once
        if len(left[i]) > max(1, n_entered.get(i, 0)):
            out.append(f"Eq. (5): request {i} left {len(left[i])} times")

    for k, legs in enumerate(plan.vehicles):
        e = fleet.e0_kwh
        # energy after each node; a leg starts from the energy at its origin node
        level = {0: e}
        for n, leg in enumerate(legs):
            i, j = leg.node_from, leg.node_to
            tag = f"vehicle {k} leg {n} ({i}->{j})"
            if not (0 <= i < n_nodes and 0 <= j < n_nodes):
                out.append(f"Eq. (6): {tag} references an unknown node")
                continue
            e = level.get(i, e)
            if not graph.arc_mask[i, j]:
                out.append(f"Eq. (1): {tag} is not time-feasible")
            if len(leg.stations) > 1:
                out.append(f"Eq. (7): {tag} visits {len(leg.stations)} stations")
            cap = 0.0
            detour = 0.0
            for c in leg.stations:
                if not 0 <= c < graph.n_stations:
                    out.append(f"Eq. (7): {tag} visits unknown station {c}")
                    continue
                if not graph.charge_mask[i, j, c]:
                    out.append(f"Eq. (2): {tag} cannot reach station {c} in time")
                cap += graph.c_hat[i, j, c]
                detour += graph.detour_dist[i, j, c]
            if abs(leg.charge_kwh) > tol:
                if not leg.stations:
                    out.append(f"Eq. (8): {tag} exchanges {leg.charge_kwh:.6g} kWh "
                               "without visiting a station")
                elif abs(leg.charge_kwh) > cap + tol:
                    out.append(f"Eq. (8): {tag} exchanges {leg.charge_kwh:.6g} kWh, "
                               f"limit {cap:.6g}")
                elif leg.charge_kwh < -tol and not fleet.allow_v2g:
                    out.append(f"Eq. (8): {tag} discharges with V2G disabled")
            used = graph.leg_energy[i, j] + detour * fleet.econ_kwh_per_km
            expected = e - used + leg.charge_kwh
            if abs(leg.arrival_energy_kwh - expected) > tol:
                out.append(f"Eq. (10): {tag} arrives with {leg.arrival_energy_kwh:.9g} kWh, "
                           f"balance gives {expected:.9g}")
            e = level[j] = leg.arrival_energy_kwh
            if j == sink:
                if abs(e - fleet.e0_kwh) > tol:
                    out.append(f"Eq. (11): vehicle {k} ends with {e:.9g} kWh, "
                               f"required {fleet.e0_kwh:.9g}")
            elif e < -tol or e > fleet.e_max_kwh + tol:
                out.append(f"Eq. (11): {tag} energy {e:.9g} outside [0, {fleet.e_max_kwh}]")
    return out


PLAN_COLUMNS = ["vehicle", "leg_index", "node_from", "node_to", "station",
                "charge_kwh", "arrival_energy_kwh"]


def save_plan(plan: FleetPlan, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(PLAN_COLUMNS)
        for k, n, leg in plan.legs():
            w.writerow([k, n, leg.node_from, leg.node_to,
                        ";".join(str(c) for c in leg.stations),
                        repr(float(leg.charge_kwh)), repr(float(leg.arrival_energy_kwh))])
    return path


def load_plan(path, n_requests: int, n_vehicles: Optional[int] = None) -> FleetPlan:
    path = Path(path)
    rows = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != PLAN_COLUMNS:
            raise PlanError(f"{path}:1: expected header {','.join(PLAN_COLUMNS)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(PLAN_COLUMNS):
                raise PlanError(f"{path}:{lineno}: expected {len(PLAN_COLUMNS)} fields")
            try:
                k, n, i, j = (int(v) for v in row[:4])
                st = tuple(int(c) for c in row[4].split(";") if c.strip())
                leg = Leg(i, j, st, float(row[5]), float(row[6]))
            except ValueError as exc:
                raise PlanError(f"{path}:{lineno}: {exc}") from None
            rows.setdefault(k, {})[n] = leg
    n_veh = n_vehicles if n_vehicles is not None else (max(rows) + 1 if rows else 0)
    vehicles = [[rows.get(k, {})[n] for n in sorted(rows.get(k, {}))] for k in range(n_veh)]
    extra = [k for k in rows if k >= n_veh]
    if extra:
        raise PlanError(f"{path}: vehicle index {extra[0]} beyond fleet size {n_veh}")
    return FleetPlan(n_requests, vehicles)
