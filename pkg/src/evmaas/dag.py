"""Transition graph over the extended request set ``{0, 1, ..., I, I+1}``.

Node 0 and node I+1 are the depot at the start and end of the horizon, nodes
``1..I`` are the travel requests. A transition ``i -> j`` means: finish
request ``i`` at its destination, optionally detour via a charging station,
and reach the origin of ``j`` by its request time. All feasibility bounds of
the scheduling model are pre-computed here so that masked transitions never
become variables.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .scenario import Scenario


@dataclass(frozen=True, eq=False)
class TransitionGraph:
    n_requests: int
    horizon: int
    node_time: np.ndarray  # (N,) t_i, minutes
    service_time: np.ndarray  # (N,) t_fp_ii, minutes
    service_dist: np.ndarray  # (N,) d_fp_ii, km
    t_fp: np.ndarray  # (N, N) deadhead time d_i -> o_j, minutes
    d_fp: np.ndarray  # (N, N) deadhead distance, km
    t_ava: np.ndarray  # (N, N) time window of the transition, minutes
    detour_time: np.ndarray  # (N, N, C) extra minutes via station c
    detour_dist: np.ndarray  # (N, N, C) extra km via station c
    c_hat: np.ndarray  # (N, N, C) max exchangeable energy, kWh
    arc_mask: np.ndarray  # (N, N) bool
    charge_mask: np.ndarray  # (N, N, C) bool
    leg_energy: np.ndarray  # (N, N) kWh for the transition without a station
    window_price: np.ndarray  # (N, N) mean price of the idle window, EUR/kWh
    window_start: np.ndarray  # (N,) drop-off time of node i, minutes

    @property
    def n_nodes(self) -> int:
        return self.n_requests + 2

    @property
    def sink(self) -> int:
        return self.n_requests + 1

    @property
    def n_stations(self) -> int:
        return self.c_hat.shape[2]

    def arcs(self):
        """Feasible ``(i, j)`` pairs in row-major order."""
        return [tuple(map(int, a)) for a in np.argwhere(self.arc_mask)]

    def charge_triples(self):
        return [tuple(map(int, a)) for a in np.argwhere(self.charge_mask)]

    def window(self, i: int, j: int) -> tuple[float, float]:
        """Idle window ``[drop-off of i, t_j]`` clipped to the horizon."""
        lo = float(np.clip(self.window_start[i], 0, self.horizon))
        hi = float(np.clip(self.node_time[j], 0, self.horizon))
        return lo, max(lo, hi)

    def to_csv(self, path) -> Path:
        """Debug dump of every feasible arc, one row per (arc, station)."""
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["i", "j", "c", "t_fp", "t_ava", "dT", "chat"])
            for i, j in self.arcs():
                w.writerow([i, j, "", self.t_fp[i, j], self.t_ava[i, j], "", ""])
                for c in range(self.n_stations):
                    if self.charge_mask[i, j, c]:
                        w.writerow([i, j, c, self.t_fp[i, j], self.t_ava[i, j],
                                    self.detour_time[i, j, c], self.c_hat[i, j, c]])
        return path


def station_detour(origin_xy, target_xy, station_xy, speed_kmh: float,
                   detour_factor: float = 1.0) -> tuple[float, float]:
    """Extra (minutes, km) for going ``origin -> station -> target``.

    Distances are straight lines scaled by ``detour_factor``; the triangle
    inequality keeps both results non-negative.
    """
    direct = math.dist(origin_xy, target_xy)
    via = math.dist(origin_xy, station_xy) + math.dist(station_xy, target_xy)
    dd = max(0.0, via - direct) * detour_factor
    return dd / speed_kmh * 60.0, dd


def max_charge_energy(graph: TransitionGraph, i: int, j: int, c: int, p_ch_kw: float) -> float:
    """Energy exchangeable at ``p_ch_kw`` in the slack of transition ``i -> j``."""
    if not graph.charge_mask[i, j, c]:
        return 0.0
    slack = graph.t_ava[i, j] - graph.t_fp[i, j] - graph.detour_time[i, j, c]
    return max(0.0, slack) / 60.0 * p_ch_kw


def build_graph(scenario: Scenario, *, literal_window: bool = False) -> TransitionGraph:
    """Pre-compute times, distances, masks and charge bounds for all transitions.

    The time window of ``i -> j`` is ``t_j - (t_i + t_fp_ii)``, the time between
    the drop-off of ``i`` and the pickup of ``j``. With ``literal_window`` the
    service time is added instead, which admits overlapping schedules and is
    kept only for comparison.
    """
    reqs = scenario.requests
    fleet = scenario.fleet
    n_req = len(reqs)
    n = n_req + 2
    n_st = len(scenario.stations)
    depot = fleet.depot
    speed, f = fleet.speed_kmh, fleet.detour_factor

    origins = [depot] + [r.origin for r in reqs] + [depot]
    dests = [depot] + [r.destination for r in reqs] + [depot]
    t_node = np.array([0] + [r.t_request for r in reqs] + [scenario.horizon], dtype=float)

    svc_d = np.array([math.dist(o, d) * f for o, d in zip(origins, dests)])
    svc_t = svc_d / speed * 60.0

    d_fp = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i != j:
                d_fp[i, j] = math.dist(dests[i], origins[j]) * f
    t_fp = d_fp / speed * 60.0

    sign = 1.0 if literal_window else -1.0
    t_ava = t_node[None, :] - t_node[:, None] + sign * svc_t[:, None]

    arc = t_fp <= t_ava
    np.fill_diagonal(arc, False)
    arc[:, 0] = False
    arc[n - 1, :] = False
    # every vehicle can always return to the depot after its last request
    arc[: n - 1, n - 1] = True

    dT = np.zeros((n, n, n_st))
    dd = np.zeros((n, n, n_st))
    for i in range(n):
        for j in range(n):
            if not arc[i, j]:
                continue
            for c, st in enumerate(scenario.stations):
                dT[i, j, c], dd[i, j, c] = station_detour(
                    dests[i], origins[j], st.location, speed, f
                )

    slack = t_ava[:, :, None] - t_fp[:, :, None] - dT
    charge = arc[:, :, None] & (slack >= 0) if n_st else np.zeros((n, n, 0), bool)
    power = np.array([s.power_kw for s in scenario.stations], dtype=float)
    c_hat = np.where(charge, np.maximum(slack, 0.0) / 60.0 * power[None, None, :], 0.0)
    c_hat = np.minimum(c_hat, fleet.e_max_kwh)

    econ = fleet.econ_kwh_per_km
    served = svc_d if fleet.service_energy else np.zeros(n)
    leg_energy = (d_fp + served[None, :]) * econ

    drop_off = t_node + svc_t
    price = np.zeros((n, n))
    for i, j in np.argwhere(arc):
        lo = min(max(drop_off[i], 0.0), scenario.horizon)
        hi = min(max(t_node[j], 0.0), scenario.horizon)
        price[i, j] = scenario.prices.average(lo, max(lo, hi))

    return TransitionGraph(
        n_requests=n_req,
        horizon=scenario.horizon,
        node_time=t_node,
        service_time=svc_t,
        service_dist=svc_d,
        t_fp=t_fp,
        d_fp=d_fp,
        t_ava=t_ava,
        detour_time=dT,
        detour_dist=dd,
        c_hat=c_hat,
        arc_mask=arc,
        charge_mask=charge,
        leg_energy=leg_energy,
        window_price=price,
        window_start=drop_off,
    )
