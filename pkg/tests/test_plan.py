import re

import pytest
from pytest import approx

from conftest import line_scenario, requires_cbc, tiny_scenario
from evmaas.dag import build_graph
from evmaas.model import build_model
from evmaas.plan import (
    FleetPlan,
    Leg,
    PlanError,
    extract_plan,
    load_plan,
    plan_objective,
    save_plan,
    validate_plan,
)
from evmaas.solver import SolveSettings, solve

CLOSE = "close"  # charge whatever returns the battery to its initial level


@pytest.fixture(scope="module")
def case():
    """Two vehicles, three requests on a line, stations near the depot and at x=6.

    Both stations lie on the way from x=8 (and x=3) back to the depot, so the
    final legs can recharge without a detour.
    """
    sc = line_scenario([(1, 5, 100, 10.0), (5, 8, 200, 9.0), (2, 3, 150, 4.0)],
                       [0.5, 6.0], n_vehicles=2, price=0.1, p_batt=4000.0)
    return sc, build_graph(sc)


def make_plan(sc, g, vehicles, offsets=None):
    """Plan from ``[(i, j, stations, q), ...]`` per vehicle with balanced energies.

    Each leg starts from the level recorded at its origin node, as the validator
    does. ``offsets[(k, n)]`` is added to the arrival energy of leg ``n``.
    """
    offsets = offsets or {}
    econ = sc.fleet.econ_kwh_per_km
    out = []
    for k, legs in enumerate(vehicles):
        level = {0: sc.fleet.e0_kwh}
        e = sc.fleet.e0_kwh
        built = []
        for n, (i, j, st, q) in enumerate(legs):
            e = level.get(i, e)
            used = g.leg_energy[i, j] + sum(g.detour_dist[i, j, c] for c in st) * econ
            if q == CLOSE:
                q = sc.fleet.e0_kwh - (e - used)
            e = e - used + q + offsets.get((k, n), 0.0)
            level[j] = e
            built.append(Leg(i, j, tuple(st), q, e))
        out.append(built)
    return plan_objective(FleetPlan(sc.n_requests, out), sc, g)


BASE = [
    [(0, 1, (), 0.0), (1, 2, (), 0.0), (2, 4, (0,), CLOSE)],
    [(0, 3, (), 0.0), (3, 4, (0,), CLOSE)],
]


def tags(problems):
    return {re.match(r"(Eq\. \(\d+\))", p).group(1) for p in problems}


def test_base_plan_is_valid(case):
    sc, g = case
    plan = make_plan(sc, g, BASE)
    assert validate_plan(plan, sc, g) == []
    assert plan.served == [1, 2, 3]
    assert plan.chains() == [[0, 1, 2, 4], [0, 3, 4]]


FAULTS = {
    # request 2 served by both vehicles
    "Eq. (4)": [BASE[0], [(0, 3, (), 0.0), (3, 2, (), 0.0), (2, 4, (0,), CLOSE)]],
    # vehicle 0 leaves request 1 a second time
    "Eq. (5)": [BASE[0] + [(1, 4, (0,), CLOSE)], BASE[1]],
    # vehicle 1 never returns to the depot
    "Eq. (6)": [BASE[0], [(0, 3, (), 0.0)]],
    # two stations on one transition
    "Eq. (7)": [[(0, 1, (), 0.0), (1, 2, (), 0.0), (2, 4, (0, 1), CLOSE)], BASE[1]],
    # energy bought without visiting a station
    "Eq. (8)": [[(0, 1, (), 0.0), (1, 2, (), 0.0), (2, 4, (), CLOSE)], BASE[1]],
    # time-infeasible order
    "Eq. (1)": [[(0, 2, (), 0.0), (2, 1, (), 0.0), (1, 4, (0,), CLOSE)], BASE[1]],
}


@pytest.mark.parametrize("tag", sorted(FAULTS))
def test_injected_fault_has_single_tag(case, tag):
    sc, g = case
    problems = validate_plan(make_plan(sc, g, FAULTS[tag]), sc, g)
    assert problems, tag
    assert tags(problems) == {tag}, problems


def test_energy_balance_fault(case):
    sc, g = case
    # later legs continue from the reported level and the closing charge
    # absorbs the extra kWh, so only the first leg is off
    plan = make_plan(sc, g, BASE, offsets={(0, 0): 1.0})
    problems = validate_plan(plan, sc, g)
    assert tags(problems) == {"Eq. (10)"}
    assert len(problems) == 1 and "leg 0" in problems[0]


def test_terminal_energy_fault(case):
    sc, g = case
    plan = make_plan(sc, g, BASE)
    last = plan.vehicles[1][-1]
    plan.vehicles[1][-1] = Leg(last.node_from, last.node_to, last.stations,
                               last.charge_kwh - 1.0, sc.fleet.e0_kwh - 1.0)
    problems = validate_plan(plan, sc, g)
    assert tags(problems) == {"Eq. (11)"}


def test_energy_band_fault(case):
    sc, g = case
    # charge 25 kWh early and give it back at the end: 45 kWh exceeds the 40 kWh battery
    plan = make_plan(sc, g, [[(0, 1, (0,), 25.0), (1, 2, (), 0.0), (2, 4, (0,), CLOSE)],
                             BASE[1]])
    assert tags(validate_plan(plan, sc, g)) == {"Eq. (11)"}


def test_capacity_fault():
    # 6 idle minutes at 22 kW allow 2.2 kWh between the two requests
    sc = line_scenario([(1, 5, 100, 10.0), (5, 6, 110, 3.0)], [5.0])
    g = build_graph(sc)
    assert g.c_hat[1, 2, 0] == approx(2.2)
    plan = make_plan(sc, g, [[(0, 1, (), 0.0), (1, 2, (0,), 3.0), (2, 3, (0,), CLOSE)]])
    problems = validate_plan(plan, sc, g)
    assert tags(problems) == {"Eq. (8)"}
    assert "limit 2.2" in problems[0]


def test_discharge_without_v2g():
    sc = line_scenario([(1, 5, 100, 10.0)], [0.5], allow_v2g=False)
    g = build_graph(sc)
    plan = make_plan(sc, g, [[(0, 1, (0,), -1.0), (1, 2, (0,), CLOSE)]])
    assert tags(validate_plan(plan, sc, g)) == {"Eq. (8)"}


def test_unreachable_station():
    sc = line_scenario([(1, 5, 100, 10.0)], [0.5, 400.0])
    g = build_graph(sc)
    assert not g.charge_mask[1, 2, 1]
    plan = make_plan(sc, g, [[(0, 1, (), 0.0), (1, 2, (1,), 0.0)]])
    assert "Eq. (2)" in tags(validate_plan(plan, sc, g))


def test_wrong_vehicle_count(case):
    sc, g = case
    plan = make_plan(sc, g, BASE[:1])
    assert tags(validate_plan(plan, sc, g)) == {"Eq. (6)"}


# --- objective parts --------------------------------------------------------

def test_objective_parts(case):
    sc, g = case
    plan = make_plan(sc, g, BASE)
    charged = plan.charged_kwh
    assert plan.j_trav == approx(-23.0)
    assert plan.j_elec == approx(0.1 * charged)
    assert plan.j_batt == approx(4000.0 * charged / 59250.0)
    assert plan.objective == approx(plan.j_trav + plan.j_elec + plan.j_batt)


def test_empty_plan_objective(case):
    sc, g = case
    plan = make_plan(sc, g, [[(0, 4, (), 0.0)], [(0, 4, (), 0.0)]])
    assert validate_plan(plan, sc, g) == []
    assert (plan.j_trav, plan.j_elec, plan.j_batt) == (0.0, 0.0, 0.0)
    assert plan.served_flags == [False, False, False]


# --- extraction -------------------------------------------------------------

def _values(model, ones, extra=None):
    vals = {n: 0.0 for n in model.names}
    for n in ones:
        vals[n] = 1.0
    vals.update(extra or {})
    return vals


def test_extract_empty(case):
    sc, g = case
    m = build_model(sc, g)
    plan = extract_plan(m, _values(m, ["X_0_4_0", "X_0_4_1"]))
    assert plan.chains() == [[0, 4], [0, 4]]
    assert plan.j_trav == 0.0 and plan.j_elec == 0.0 and plan.j_batt == 0.0


def test_extract_chain(case):
    sc, g = case
    m = build_model(sc, g)
    plan = extract_plan(m, _values(m, ["X_0_1_0", "X_1_2_0", "X_2_4_0", "X_0_4_1",
                                       "S_2_4_0_0"], {"Cp_2_4_0_0": 3.5}))
    assert plan.chains() == [[0, 1, 2, 4], [0, 4]]
    assert plan.vehicles[0][-1].stations == (0,)
    assert plan.vehicles[0][-1].charge_kwh == 3.5
    assert plan.j_trav == approx(-19.0)
    assert plan.j_elec == approx(0.35)


def test_extract_signed_exchange(case):
    sc, g = case
    m = build_model(sc, g)
    plan = extract_plan(m, _values(m, ["X_0_1_0", "X_1_4_0", "X_0_4_1", "S_1_4_0_0"],
                                   {"Cm_1_4_0_0": 2.0}))
    assert plan.vehicles[0][-1].charge_kwh == -2.0
    assert plan.discharged_kwh == 2.0


@pytest.mark.parametrize("ones", [
    ["X_0_1_0", "X_0_4_1"],  # vehicle 0 never leaves request 1
    ["X_0_1_0", "X_1_4_0", "X_0_1_1", "X_1_4_1"],  # request 1 twice
])
def test_extract_rejects_broken_solutions(case, ones):
    sc, g = case
    m = build_model(sc, g)
    with pytest.raises(PlanError, match=r"violates Eqs. \(4\)-\(6\)"):
        extract_plan(m, _values(m, ones))


def test_extract_rejects_fractional(case):
    sc, g = case
    m = build_model(sc, g)
    with pytest.raises(PlanError, match="integral"):
        extract_plan(m, _values(m, ["X_0_4_1"], {"X_0_4_0": 0.5}))


@requires_cbc
@pytest.mark.parametrize("seed", range(8))
def test_solver_plans_validate(seed):
    sc = tiny_scenario(seed)
    g = build_graph(sc)
    m = build_model(sc, g)
    res = solve(m, SolveSettings(mip_gap=1e-6))
    plan = extract_plan(m, res.values)
    assert validate_plan(plan, sc, g) == []
    # the objective recomputed from legs matches the solver up to the tie-break
    assert plan.objective == approx(res.objective, abs=1e-6)


# --- CSV --------------------------------------------------------------------

def test_csv_round_trip(case, tmp_path):
    sc, g = case
    plan = make_plan(sc, g, FAULTS["Eq. (7)"])
    path = save_plan(plan, tmp_path / "plan.csv")
    back = load_plan(path, sc.n_requests)
    assert back.vehicles == plan.vehicles
    assert "0;1" in path.read_text()


def test_csv_keeps_empty_vehicles(case, tmp_path):
    sc, g = case
    plan = make_plan(sc, g, [BASE[0], []])
    back = load_plan(save_plan(plan, tmp_path / "p.csv"), sc.n_requests, n_vehicles=2)
    assert len(back.vehicles) == 2 and back.vehicles[1] == []


@pytest.mark.parametrize("text, match", [
    ("a,b\n", "header"),
    ("vehicle,leg_index,node_from,node_to,station,charge_kwh,arrival_energy_kwh\n0,0,0\n",
     ":2: expected 7"),
    ("vehicle,leg_index,node_from,node_to,station,charge_kwh,arrival_energy_kwh\n"
     "0,0,0,1,,x,1\n", ":2:"),
])
def test_csv_errors(tmp_path, text, match):
    path = tmp_path / "bad.csv"
    path.write_text(text)
    with pytest.raises(PlanError, match=match):
        load_plan(path, 3)


def test_csv_vehicle_out_of_range(case, tmp_path):
    sc, g = case
    path = save_plan(make_plan(sc, g, BASE), tmp_path / "p.csv")
    with pytest.raises(PlanError, match="beyond fleet size"):
        load_plan(path, sc.n_requests, n_vehicles=1)
