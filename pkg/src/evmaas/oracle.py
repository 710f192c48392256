"""Brute-force optimum for tiny scenarios.

Works on the transition graph only: every way to split the requests into
ordered vehicle chains is enumerated, each chain tries every station choice per
leg and the charge amounts come from the exact chain solver. No code is shared
with the MILP assembly, so agreement between the two is a real check.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

from . import degradation as deg
from .dag import TransitionGraph
from .energy import Window, solve_chain
from .plan import FleetPlan, Leg, plan_objective
from .scenario import Scenario


class OracleError(ValueError):
    pass


@dataclass(frozen=True)
class TinyLimits:
    max_requests: int = 4
    max_vehicles: int = 2
    max_stations: int = 1


def enumerate_optimum(scenario: Scenario, graph: TransitionGraph,
                      deg_params: Optional[deg.DegradationParams] = None,
                      limits: TinyLimits = TinyLimits()) -> tuple:
    """Return ``(objective, plan)`` of the best fleet schedule.

    Ties are broken towards the lexicographically smallest tuple of served
    request sequences, so idle vehicles come first.
    """
    deg_params = deg_params or scenario.degradation
    n_req = scenario.n_requests
    K = scenario.fleet.n_vehicles
    n_st = len(scenario.stations)
    if n_req > limits.max_requests or K > limits.max_vehicles or n_st > limits.max_stations:
        raise OracleError(f"scenario ({n_req} requests, {K} vehicles, {n_st} stations) "
                          f"exceeds tiny limits {limits}")
    if K == 0:
        return 0.0, FleetPlan(n_req, [])
    fleet = scenario.fleet
    sink = n_req + 1
    mc = deg.marginal_cost(deg_params)
    revenue = [0.0] + [r.revenue for r in scenario.requests] + [0.0]
    econ = fleet.econ_kwh_per_km

    def leg_options(i, j):
        opts = [None]
        opts += [c for c in range(n_st) if graph.charge_mask[i, j, c]]
        return opts

    def window(i, j, c) -> Window:
        if c is None:
            return Window(graph.leg_energy[i, j])
        p = graph.window_price[i, j]
        cap = graph.c_hat[i, j, c]
        return Window(graph.leg_energy[i, j] + graph.detour_dist[i, j, c] * econ,
                      cap, p + mc, p - mc, discharge_cap=cap if fleet.allow_v2g else 0.0)

    @lru_cache(maxsize=None)
    def best_chain(seq: tuple):
        """Cheapest way to drive ``0 -> seq -> I+1``: (cost, stations, chain solution)."""
        nodes = (0,) + seq + (sink,)
        pairs = list(zip(nodes, nodes[1:]))
        if not all(graph.arc_mask[i, j] for i, j in pairs):
            return None
        best = None
        for choice in itertools.product(*(leg_options(i, j) for i, j in pairs)):
            sol = solve_chain([window(i, j, c) for (i, j), c in zip(pairs, choice)],
                              fleet.e0_kwh, fleet.e_max_kwh)
            if sol is None:
                continue
            cost = sol.cost - sum(revenue[j] for j in seq)
            if best is None or cost < best[0] - 1e-12:
                best = (cost, choice, sol)
        return best

    best = None
    requests = list(range(1, n_req + 1))
    # label[r] = vehicle serving r, or K for "rejected"
    for labels in itertools.product(range(K + 1), repeat=n_req):
        groups = [[r for r, lab in zip(requests, labels) if lab == k] for k in range(K)]
        per_vehicle = []
        ok = True
        for g in groups:
            options = []
            for perm in itertools.permutations(g):
                bc = best_chain(perm)
                if bc is not None:
                    options.append((bc[0], perm, bc))
            if not options:
                ok = False
                break
            options.sort(key=lambda o: (o[0], o[1]))
            per_vehicle.append(options[0])
        if not ok:
            continue
        total = sum(o[0] for o in per_vehicle)
        key = tuple(o[1] for o in per_vehicle)
        if best is None or total < best[0] - 1e-9 or (abs(total - best[0]) <= 1e-9
                                                        and key < best[1]):
            best = (total, key, per_vehicle)

    if best is None:
        raise OracleError("no feasible schedule (depot energy bounds)")

    vehicles = []
    for _, seq, (_, choice, sol) in best[2]:
        nodes = (0,) + seq + (sink,)
        legs = []
        for (i, j), c, q, e in zip(zip(nodes, nodes[1:]), choice, sol.exchange, sol.levels):
            legs.append(Leg(i, j, () if c is None else (c,), q, e))
        vehicles.append(legs)
    plan = plan_objective(FleetPlan(n_req, vehicles), scenario, graph, deg_params)
    return plan.objective, plan
