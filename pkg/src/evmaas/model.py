"""Solver-neutral MILP for fleet scheduling with charging, V2G and aging cost.

Variables (zero-based indices, depot nodes ``0`` and ``I+1``):

* ``X_{i}_{j}_{k}``       vehicle k performs transition i -> j (binary)
* ``S_{i}_{j}_{k}_{c}``   ... and visits station c on the way (binary)
* ``Cp_{i}_{j}_{k}_{c}``  kWh charged at c during the transition
* ``Cm_{i}_{j}_{k}_{c}``  kWh discharged at c during the transition
* ``E_{j}_{k}``           battery energy of vehicle k after finishing node j

Variables exist only for transitions the graph marks feasible. The objective
is minimized: negative fare revenue plus electricity cost plus the linearized
battery degradation cost.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from . import degradation as deg
from .dag import TransitionGraph
from .scenario import Scenario

BINARY = "binary"
CONTINUOUS = "continuous"
LE, EQ, GE = "<=", "=", ">="

# keeps Cp * Cm = 0 when a window has zero price and zero degradation cost
TIE_BREAK = 1e-9


class ModelError(ValueError):
    pass


@dataclass
class Constraint:
    name: str
    coefs: dict  # var index -> coefficient
    sense: str
    rhs: float


@dataclass
class MILPModel:
    names: list = field(default_factory=list)
    kinds: list = field(default_factory=list)
    lb: list = field(default_factory=list)
    ub: list = field(default_factory=list)
    obj: list = field(default_factory=list)
    constraints: list = field(default_factory=list)
    index: dict = field(default_factory=dict)
    # decoding context; absent for hand-built models
    scenario: Optional[Scenario] = None
    graph: Optional[TransitionGraph] = None
    deg_params: Optional[deg.DegradationParams] = None
    big_m: float = 0.0

    def add_var(self, name, kind=CONTINUOUS, lb=0.0, ub=1.0, obj=0.0) -> int:
        if name in self.index:
            raise ModelError(f"duplicate variable {name}")
        self.index[name] = len(self.names)
        self.names.append(name)
        self.kinds.append(kind)
        self.lb.append(float(lb))
        self.ub.append(float(ub))
        self.obj.append(float(obj))
        return self.index[name]

    def add_constraint(self, name, coefs, sense, rhs) -> Constraint:
        merged = {}
        for v, a in coefs:
            merged[v] = merged.get(v, 0.0) + float(a)
        row = Constraint(name, {v: a for v, a in merged.items() if a != 0.0}, sense, float(rhs))
        self.constraints.append(row)
        return row

    @property
    def n_vars(self) -> int:
        return len(self.names)

    @property
    def binaries(self) -> list:
        return [v for v, k in enumerate(self.kinds) if k == BINARY]

    def validate(self):
        for v, name in enumerate(self.names):
            lo, hi = self.lb[v], self.ub[v]
            if not (np.isfinite(lo) and np.isfinite(hi)):
                raise ModelError(f"{name}: bounds must be finite")
            if lo > hi:
                raise ModelError(f"{name}: infeasible bounds [{lo}, {hi}]")
            if self.kinds[v] == BINARY and (lo < 0 or hi > 1):
                raise ModelError(f"{name}: binary bounds outside [0, 1]")
        for row in self.constraints:
            if row.sense not in (LE, EQ, GE):
                raise ModelError(f"{row.name}: bad sense {row.sense}")

    def matrix(self):
        """Constraint matrix (CSR) with row lower/upper bound vectors."""
        rows, cols, data = [], [], []
        lo = np.full(len(self.constraints), -np.inf)
        hi = np.full(len(self.constraints), np.inf)
        for r, row in enumerate(self.constraints):
            for v, a in row.coefs.items():
                rows.append(r)
                cols.append(v)
                data.append(a)
            if row.sense in (LE, EQ):
                hi[r] = row.rhs
            if row.sense in (GE, EQ):
                lo[r] = row.rhs
        a = sp.csr_matrix((data, (rows, cols)), shape=(len(self.constraints), self.n_vars))
        return a, lo, hi

    def objective_value(self, values) -> float:
        x = self.as_vector(values)
        return float(np.dot(self.obj, x))

    def as_vector(self, values) -> np.ndarray:
        if isinstance(values, dict):
            x = np.zeros(self.n_vars)
            for name, val in values.items():
                if name in self.index:
                    x[self.index[name]] = val
            return x
        return np.asarray(values, dtype=float)

    def violations(self, values, tol: float = 1e-6) -> list:
        """Names of bounds, integrality marks and rows violated beyond ``tol``."""
        x = self.as_vector(values)
        out = []
        for v, name in enumerate(self.names):
            if x[v] < self.lb[v] - tol or x[v] > self.ub[v] + tol:
                out.append(f"bound {name}={x[v]}")
            if self.kinds[v] == BINARY and abs(x[v] - round(x[v])) > tol:
                out.append(f"integrality {name}={x[v]}")
        for row in self.constraints:
            act = sum(a * x[v] for v, a in row.coefs.items())
            if row.sense == LE and act > row.rhs + tol:
                out.append(f"row {row.name}: {act} > {row.rhs}")
            elif row.sense == GE and act < row.rhs - tol:
                out.append(f"row {row.name}: {act} < {row.rhs}")
            elif row.sense == EQ and abs(act - row.rhs) > tol:
                out.append(f"row {row.name}: {act} != {row.rhs}")
        return out


def x_name(i, j, k):
    return f"X_{i}_{j}_{k}"


def s_name(i, j, k, c):
    return f"S_{i}_{j}_{k}_{c}"


def cp_name(i, j, k, c):
    return f"Cp_{i}_{j}_{k}_{c}"


def cm_name(i, j, k, c):
    return f"Cm_{i}_{j}_{k}_{c}"


def e_name(j, k):
    return f"E_{j}_{k}"


def build_model(scenario: Scenario, graph: TransitionGraph,
                deg_params: Optional[deg.DegradationParams] = None,
                symmetry_breaking: bool = True) -> MILPModel:
    """Assemble the fleet MILP.

    Besides the scheduling and energy rows, each vehicle gets an aggregate
    energy row ``etotal_k`` (consumption equals net exchange over the day),
    which is implied by the balance rows but tightens the relaxation a lot.
    ``symmetry_breaking`` adds rows that order the (identical) vehicles by the
    id of their first request. They remove relabelled copies of a schedule and
    leave the optimal value unchanged.
    """
    deg_params = deg_params or scenario.degradation
    n_req = scenario.n_requests
    if graph.n_requests != n_req or graph.n_stations != len(scenario.stations):
        raise ModelError("graph was built for a different scenario")
    fleet = scenario.fleet
    K = fleet.n_vehicles
    sink = n_req + 1
    nodes = range(n_req + 2)
    requests = range(1, n_req + 1)
    arcs = graph.arcs()
    triples = {(i, j): [c for c in range(graph.n_stations) if graph.charge_mask[i, j, c]]
               for i, j in arcs}
    revenue = {j: scenario.requests[j - 1].revenue for j in requests}
    marginal = deg.marginal_cost(deg_params) + TIE_BREAK
    e_max, e0 = fleet.e_max_kwh, fleet.e0_kwh
    # with X = 0 the transition moves no energy, so e_max relaxes the balance fully
    big_m = e_max

    m = MILPModel(scenario=scenario, graph=graph, deg_params=deg_params, big_m=big_m)
    for k in range(K):
        for i, j in arcs:
            m.add_var(x_name(i, j, k), BINARY, 0, 1, -revenue.get(j, 0.0))
        for i, j in arcs:
            price = graph.window_price[i, j]
            for c in triples[(i, j)]:
                cap = graph.c_hat[i, j, c]
                m.add_var(s_name(i, j, k, c), BINARY, 0, 1)
                m.add_var(cp_name(i, j, k, c), CONTINUOUS, 0, cap, price + marginal)
                m.add_var(cm_name(i, j, k, c), CONTINUOUS, 0,
                          cap if fleet.allow_v2g else 0.0, -price + marginal)
        for j in nodes:
            fixed = j in (0, sink)
            m.add_var(e_name(j, k), CONTINUOUS, e0 if fixed else 0.0, e0 if fixed else e_max)

    ix = m.index
    succ = {i: [j for a, j in arcs if a == i] for i in nodes}
    pred = {j: [i for i, b in arcs if b == j] for j in nodes}

    for j in requests:
        if pred[j] and K:
            m.add_constraint(f"serve_{j}",
                             [(ix[x_name(i, j, k)], 1) for i in pred[j] for k in range(K)], LE, 1)
    for i in requests:
        if succ[i] and K:
            m.add_constraint(f"leave_{i}",
                             [(ix[x_name(i, j, k)], 1) for j in succ[i] for k in range(K)], LE, 1)
    for k in range(K):
        for j in requests:
            terms = [(ix[x_name(i, j, k)], 1) for i in pred[j]]
            terms += [(ix[x_name(j, l, k)], -1) for l in succ[j]]
            if terms:
                m.add_constraint(f"flow_{j}_{k}", terms, EQ, 0)
        m.add_constraint(f"start_{k}", [(ix[x_name(0, j, k)], 1) for j in succ[0]], EQ, 1)
        m.add_constraint(f"end_{k}", [(ix[x_name(i, sink, k)], 1) for i in pred[sink]], EQ, 1)

        for i, j in arcs:
            xv = ix[x_name(i, j, k)]
            cs = triples[(i, j)]
            if cs:
                m.add_constraint(f"station_{i}_{j}_{k}",
                                 [(ix[s_name(i, j, k, c)], 1) for c in cs] + [(xv, -1)], LE, 0)
            for c in cs:
                m.add_constraint(
                    f"cap_{i}_{j}_{k}_{c}",
                    [(ix[cp_name(i, j, k, c)], 1), (ix[cm_name(i, j, k, c)], 1),
                     (ix[s_name(i, j, k, c)], -graph.c_hat[i, j, c])], LE, 0)

            # e_j - e_i + E_ij - sum(Cp - Cm) <= M (1 - X) and >= -M (1 - X),
            # with E_ij = leg energy * X + sum_c detour energy * S
            base = [(ix[e_name(j, k)], 1), (ix[e_name(i, k)], -1),
                    (xv, graph.leg_energy[i, j])]
            for c in cs:
                base += [(ix[s_name(i, j, k, c)],
                          graph.detour_dist[i, j, c] * fleet.econ_kwh_per_km),
                         (ix[cp_name(i, j, k, c)], -1), (ix[cm_name(i, j, k, c)], 1)]
            m.add_constraint(f"ebal_up_{i}_{j}_{k}", base + [(xv, big_m)], LE, big_m)
            m.add_constraint(f"ebal_lo_{i}_{j}_{k}", base + [(xv, -big_m)], GE, -big_m)
    # the balance rows telescope along a chain to e_end - e_start = 0, so each
    # vehicle's consumption equals its net exchange; redundant for integer X
    # but it stops the relaxation from getting energy out of fractional big-M rows
    for k in range(K):
        terms = []
        for i, j in arcs:
            terms.append((ix[x_name(i, j, k)], graph.leg_energy[i, j]))
            for c in triples[(i, j)]:
                terms += [(ix[s_name(i, j, k, c)], graph.detour_dist[i, j, c] * fleet.econ_kwh_per_km),
                          (ix[cp_name(i, j, k, c)], -1), (ix[cm_name(i, j, k, c)], 1)]
        m.add_constraint(f"etotal_{k}", terms, EQ, 0)
    # identical vehicles: order them by first node, unused ones (first node = sink) last
    if symmetry_breaking:
        for k in range(K - 1):
            m.add_constraint(f"order_{k}",
                             [(ix[x_name(0, j, k)], j) for j in succ[0]]
                             + [(ix[x_name(0, j, k + 1)], -j) for j in succ[0]], LE, 0)
    m.validate()
    return m


def parse_name(name: str):
    """Split a contract variable name into ``(kind, indices)``."""
    head, *rest = name.split("_")
    return head, tuple(int(r) for r in rest)
