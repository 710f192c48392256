"""Scenario data model: travel requests, fleet, charging stations and prices.

Locations are points in a plane measured in km, times are integer minutes from
the start of the horizon and prices are kept in EUR/kWh internally (files carry
EUR/MWh, the unit of day-ahead market feeds).
"""
from __future__ import annotations

import configparser
import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .degradation import DegradationParams

Location = tuple[float, float]


class ScenarioError(ValueError):
    """Raised for malformed scenario files or inconsistent scenario data."""


@dataclass(frozen=True)
class TravelRequest:
    id: int
    origin: Location
    destination: Location
    t_request: int
    revenue: float

    def __post_init__(self):
        if tuple(self.origin) == tuple(self.destination):
            raise ScenarioError(f"request {self.id}: origin equals destination")
        if self.revenue < 0:
            raise ScenarioError(f"request {self.id}: negative revenue")
        if self.t_request < 0:
            raise ScenarioError(f"request {self.id}: negative request time")


@dataclass(frozen=True)
class ChargingStation:
    id: int
    location: Location
    power_kw: float = 22.0

    def __post_init__(self):
        if not self.power_kw > 0:
            raise ScenarioError(f"station {self.id}: charging power must be positive")


@dataclass(frozen=True)
class FleetSpec:
    """Homogeneous fleet. ``e_max_kwh`` is the usable battery energy."""

    n_vehicles: int = 1
    e_max_kwh: float = 40.0
    e0_kwh: float = 20.0
    econ_kwh_per_km: float = 0.15
    depot: Location = (0.0, 0.0)
    speed_kmh: float = 30.0
    detour_factor: float = 1.3
    allow_v2g: bool = True
    # Count the passenger-carrying leg of every request in the energy balance.
    service_energy: bool = True

    def __post_init__(self):
        if self.n_vehicles < 0:
            raise ScenarioError("n_vehicles must be >= 0")
        if not 0 <= self.e0_kwh <= self.e_max_kwh:
            raise ScenarioError(
                f"initial energy {self.e0_kwh} kWh outside [0, {self.e_max_kwh}]"
            )
        if not self.econ_kwh_per_km > 0:
            raise ScenarioError("consumption must be positive")
        if not self.speed_kmh > 0:
            raise ScenarioError("speed must be positive")
        if self.detour_factor < 1:
            raise ScenarioError("detour factor must be >= 1")


@dataclass(frozen=True)
class PriceSeries:
    """Piecewise-constant price on right-open intervals ``[b_n, b_{n+1})``."""

    breakpoints: tuple[int, ...]
    prices: tuple[float, ...]  # EUR/kWh
    horizon: int

    def __post_init__(self):
        if len(self.breakpoints) != len(self.prices) or not self.breakpoints:
            raise ScenarioError("price series needs one price per breakpoint")
        if self.breakpoints[0] != 0:
            raise ScenarioError("price series must start at minute 0")
        if any(b >= a for b, a in zip(self.breakpoints, self.breakpoints[1:])):
            raise ScenarioError("price breakpoints must be strictly increasing")
        if self.breakpoints[-1] >= self.horizon:
            raise ScenarioError("price breakpoint beyond the horizon")

    @classmethod
    def flat(cls, price: float, horizon: int) -> "PriceSeries":
        return cls((0,), (price,), horizon)

    def price_at(self, t: float) -> float:
        if not 0 <= t < self.horizon:
            raise ScenarioError(f"time {t} outside horizon [0, {self.horizon})")
        idx = int(np.searchsorted(self.breakpoints, t, side="right")) - 1
        return self.prices[idx]

    def integral(self, t0: float, t1: float) -> float:
        """Integral of the price over ``[t0, t1]`` in EUR/kWh * minutes."""
        t0 = max(t0, 0.0)
        t1 = min(t1, float(self.horizon))
        if t1 <= t0:
            return 0.0
        ends = list(self.breakpoints[1:]) + [self.horizon]
        total = 0.0
        for start, end, price in zip(self.breakpoints, ends, self.prices):
            lo, hi = max(start, t0), min(end, t1)
            if hi > lo:
                total += price * (hi - lo)
        return total

    def average(self, t0: float, t1: float) -> float:
        """Time-weighted mean price over ``[t0, t1]`` clipped to the horizon.

        Degenerate windows return the price at the (clipped) window start.
        """
        lo = min(max(t0, 0.0), self.horizon)
        hi = min(max(t1, 0.0), self.horizon)
        if hi - lo <= 0:
            return self.price_at(min(lo, self.horizon - 1))
        return self.integral(lo, hi) / (hi - lo)


def price_at(prices: PriceSeries, t: float) -> float:
    return prices.price_at(t)


@dataclass(frozen=True)
class Scenario:
    requests: tuple[TravelRequest, ...]
    stations: tuple[ChargingStation, ...]
    fleet: FleetSpec
    prices: PriceSeries
    horizon: int = 1440
    degradation: DegradationParams = field(default_factory=DegradationParams)

    def __post_init__(self):
        if self.prices.horizon != self.horizon:
            raise ScenarioError("price series horizon differs from scenario horizon")
        for r in self.requests:
            if not 0 <= r.t_request < self.horizon:
                raise ScenarioError(
                    f"request {r.id}: time {r.t_request} outside [0, {self.horizon})"
                )

    @property
    def n_requests(self) -> int:
        return len(self.requests)


# ---------------------------------------------------------------------------
# File IO
# ---------------------------------------------------------------------------

REQUEST_COLUMNS = ["id", "origin_x", "origin_y", "dest_x", "dest_y", "t_min", "revenue_eur"]
STATION_COLUMNS = ["id", "x", "y", "p_ch_kw"]
PRICE_COLUMNS = ["t_min", "price_eur_per_mwh"]
CONFIG_NAME = "fleet.ini"


def _read_rows(path: Path, columns: Sequence[str]):
    if not path.exists():
        raise ScenarioError(f"{path}: missing file")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != list(columns):
            raise ScenarioError(f"{path}:1: expected header {','.join(columns)}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(columns):
                raise ScenarioError(f"{path}:{lineno}: expected {len(columns)} fields")
            yield lineno, [c.strip() for c in row]


def _parse(path: Path, lineno: int, fn, value: str):
    try:
        return fn(value)
    except ValueError as exc:
        raise ScenarioError(f"{path}:{lineno}: {exc}") from None


def _int(value: str) -> int:
    f = float(value)
    if not f.is_integer():
        raise ValueError(f"expected integer, got {value!r}")
    return int(f)


def load_scenario(dir_path) -> Scenario:
    """Read ``requests.csv``, ``stations.csv``, ``prices.csv`` and ``fleet.ini``."""
    d = Path(dir_path)
    fleet, horizon, deg = _load_config(d / CONFIG_NAME)

    requests = []
    path = d / "requests.csv"
    for ln, row in _read_rows(path, REQUEST_COLUMNS):
        rid, t = _parse(path, ln, _int, row[0]), _parse(path, ln, _int, row[5])
        ox, oy, dx, dy, rev = (_parse(path, ln, float, v) for v in (*row[1:5], row[6]))
        if not 0 <= t < horizon:
            raise ScenarioError(f"{path}:{ln}: request time {t} outside [0, {horizon})")
        try:
            requests.append(TravelRequest(rid, (ox, oy), (dx, dy), t, rev))
        except ScenarioError as exc:
            raise ScenarioError(f"{path}:{ln}: {exc}") from None

    stations = []
    path = d / "stations.csv"
    for ln, row in _read_rows(path, STATION_COLUMNS):
        sid = _parse(path, ln, _int, row[0])
        x, y, p = (_parse(path, ln, float, v) for v in row[1:])
        try:
            stations.append(ChargingStation(sid, (x, y), p))
        except ScenarioError as exc:
            raise ScenarioError(f"{path}:{ln}: {exc}") from None

    path = d / "prices.csv"
    points = []
    for ln, row in _read_rows(path, PRICE_COLUMNS):
        points.append((ln, _parse(path, ln, _int, row[0]), _parse(path, ln, float, row[1])))
    if not points:
        raise ScenarioError(f"{path}: no price rows")
    points.sort(key=lambda p: p[1])
    if points[0][1] != 0:
        raise ScenarioError(f"{path}: coverage gap, first price at minute {points[0][1]} not 0")
    for (_, a, _), (ln, b, _) in zip(points, points[1:]):
        if a == b:
            raise ScenarioError(f"{path}:{ln}: duplicate breakpoint {b}")
    if points[-1][1] >= horizon:
        raise ScenarioError(f"{path}:{points[-1][0]}: breakpoint beyond horizon {horizon}")
    prices = PriceSeries(
        tuple(p[1] for p in points), tuple(p[2] / 1000.0 for p in points), horizon
    )
    return Scenario(tuple(requests), tuple(stations), fleet, prices, horizon, deg)


def _load_config(path: Path):
    if not path.exists():
        raise ScenarioError(f"{path}: missing file")
    cp = configparser.ConfigParser()
    try:
        cp.read(path)
    except configparser.Error as exc:
        raise ScenarioError(f"{path}: {exc}") from None
    f = cp["fleet"] if cp.has_section("fleet") else {}
    g = cp["degradation"] if cp.has_section("degradation") else {}

    def get(section, key, conv, default):
        if key not in section:
            return default
        try:
            return conv(section[key])
        except ValueError:
            raise ScenarioError(f"{path}: bad value for {key}: {section[key]!r}") from None

    def boolean(v: str) -> bool:
        if v.strip().lower() in ("1", "true", "yes", "on"):
            return True
        if v.strip().lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(v)

    try:
        fleet = FleetSpec(
            n_vehicles=get(f, "n_vehicles", _int, 1),
            e_max_kwh=get(f, "e_max_kwh", float, 40.0),
            e0_kwh=get(f, "e0_kwh", float, 20.0),
            econ_kwh_per_km=get(f, "econ_kwh_per_km", float, 0.15),
            depot=(get(f, "depot_x", float, 0.0), get(f, "depot_y", float, 0.0)),
            speed_kmh=get(f, "speed_kmh", float, 30.0),
            detour_factor=get(f, "detour_factor", float, 1.3),
            allow_v2g=get(f, "allow_v2g", boolean, True),
            service_energy=get(f, "service_energy", boolean, True),
        )
    except ScenarioError as exc:
        raise ScenarioError(f"{path}: {exc}") from None
    horizon = get(f, "horizon_min", _int, 1440)
    if horizon <= 0:
        raise ScenarioError(f"{path}: horizon_min must be positive")

    defaults = DegradationParams()
    c_rate = get(g, "c_rate", float, defaults.c_rate_ch)
    q_override = get(g, "q_eol_kwh", lambda v: None if v.lower() == "none" else float(v),
                     defaults.q_eol_override)
    try:
        deg = DegradationParams(
            b1=get(g, "b1", float, defaults.b1),
            b2=get(g, "b2", float, defaults.b2),
            b3=get(g, "b3", float, defaults.b3),
            b4=get(g, "b4", float, defaults.b4),
            b5=get(g, "b5", float, defaults.b5),
            b6=get(g, "b6", float, defaults.b6),
            phi_z=get(g, "phi_z", float, defaults.phi_z),
            dz=get(g, "dz", float, defaults.dz),
            c_rate_ch=get(g, "c_rate_ch", float, c_rate),
            c_rate_dch=get(g, "c_rate_dch", float, c_rate),
            v_ch=get(g, "v_ch", float, defaults.v_ch),
            de_eol=get(g, "de_eol", float, defaults.de_eol),
            p_batt=get(g, "p_batt_eur", float, defaults.p_batt),
            q_eol_override=q_override,
            drop_scale=get(g, "drop_scale", float, defaults.drop_scale),
            q_scale_kwh=get(g, "q_scale_kwh", float, defaults.q_scale_kwh),
        )
    except ValueError as exc:
        raise ScenarioError(f"{path}: {exc}") from None
    return fleet, horizon, deg


def save_scenario(scenario: Scenario, dir_path) -> Path:
    d = Path(dir_path)
    d.mkdir(parents=True, exist_ok=True)
    with open(d / "requests.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(REQUEST_COLUMNS)
        for r in scenario.requests:
            w.writerow([r.id, repr(r.origin[0]), repr(r.origin[1]), repr(r.destination[0]),
                        repr(r.destination[1]), r.t_request, repr(r.revenue)])
    with open(d / "stations.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(STATION_COLUMNS)
        for s in scenario.stations:
            w.writerow([s.id, repr(s.location[0]), repr(s.location[1]), repr(s.power_kw)])
    with open(d / "prices.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(PRICE_COLUMNS)
        for t, p in zip(scenario.prices.breakpoints, scenario.prices.prices):
            # decimal rounding undoes the kWh/MWh scaling noise
            w.writerow([t, repr(round(p * 1000.0, 9))])

    fl, dg = scenario.fleet, scenario.degradation
    cp = configparser.ConfigParser()
    cp["fleet"] = {
        "n_vehicles": str(fl.n_vehicles),
        "e_max_kwh": repr(fl.e_max_kwh),
        "e0_kwh": repr(fl.e0_kwh),
        "econ_kwh_per_km": repr(fl.econ_kwh_per_km),
        "speed_kmh": repr(fl.speed_kmh),
        "depot_x": repr(fl.depot[0]),
        "depot_y": repr(fl.depot[1]),
        "detour_factor": repr(fl.detour_factor),
        "allow_v2g": str(fl.allow_v2g).lower(),
        "service_energy": str(fl.service_energy).lower(),
        "horizon_min": str(scenario.horizon),
    }
    cp["degradation"] = {
        "b1": repr(dg.b1), "b2": repr(dg.b2), "b3": repr(dg.b3),
        "b4": repr(dg.b4), "b5": repr(dg.b5), "b6": repr(dg.b6),
        "phi_z": repr(dg.phi_z), "dz": repr(dg.dz),
        "c_rate_ch": repr(dg.c_rate_ch), "c_rate_dch": repr(dg.c_rate_dch),
        "v_ch": repr(dg.v_ch), "de_eol": repr(dg.de_eol),
        "p_batt_eur": repr(dg.p_batt),
        "q_eol_kwh": "none" if dg.q_eol_override is None else repr(dg.q_eol_override),
        "drop_scale": repr(dg.drop_scale), "q_scale_kwh": repr(dg.q_scale_kwh),
    }
    with open(d / CONFIG_NAME, "w") as fh:
        cp.write(fh)
    return d


# ---------------------------------------------------------------------------
# Synthetic generation
# ---------------------------------------------------------------------------

PROFILES = ("uniform", "bimodal")
PRICE_PATTERNS = ("flat", "two-level")

# morning and evening commute peaks, minutes after midnight
_PEAKS = ((8 * 60, 60.0), (17 * 60 + 30, 75.0))


def _draw_times(rng: np.random.Generator, n: int, profile: str, horizon: int) -> list[int]:
    if profile == "uniform":
        return [int(t) for t in rng.integers(0, horizon, size=n)]
    scale = horizon / 1440.0
    out = []
    while len(out) < n:
        centre, sd = _PEAKS[int(rng.integers(0, 2))]
        t = int(round(rng.normal(centre * scale, sd * scale)))
        if 0 <= t < horizon:
            out.append(t)
    return out


def generate_synthetic(
    seed: int,
    n_requests: int,
    n_vehicles: int,
    n_stations: int,
    profile: str = "bimodal",
    *,
    horizon: int = 1440,
    area_km: float = 10.0,
    price_pattern: str = "two-level",
    flat_price: float = 0.10,
    day_price: float = 0.16,
    night_price: float = 0.06,
    day_start: int = 420,
    day_end: int = 1260,
    fleet: Optional[FleetSpec] = None,
    degradation: Optional[DegradationParams] = None,
    station_power_kw: float = 22.0,
    fare_base: float = 2.5,
    fare_per_km: float = 1.5,
) -> Scenario:
    """Random scenario in an ``area_km`` square with the depot at its centre.

    Revenue per request is ``fare_base + fare_per_km * distance`` rounded to
    cents. The two-level price pattern is expensive on ``[day_start, day_end)``
    (scaled to the horizon) and cheap otherwise.
    """
    if min(n_requests, n_vehicles, n_stations) < 0:
        raise ScenarioError("counts must be non-negative")
    if profile not in PROFILES:
        raise ScenarioError(f"unknown demand profile {profile!r}")
    if price_pattern not in PRICE_PATTERNS:
        raise ScenarioError(f"unknown price pattern {price_pattern!r}")
    rng = np.random.default_rng(seed)
    centre = (area_km / 2.0, area_km / 2.0)
    base = fleet or FleetSpec()
    fleet = FleetSpec(**{**base.__dict__, "n_vehicles": n_vehicles, "depot": centre})

    def point() -> Location:
        x, y = rng.uniform(0.0, area_km, size=2)
        return (round(float(x), 4), round(float(y), 4))

    times = _draw_times(rng, n_requests, profile, horizon)
    requests = []
    for rid, t in enumerate(sorted(times), start=1):
        o = point()
        dest = point()
        while dest == o:
            dest = point()
        km = math.dist(o, dest) * fleet.detour_factor
        requests.append(TravelRequest(rid, o, dest, t, round(fare_base + fare_per_km * km, 2)))

    stations = tuple(
        ChargingStation(c, point(), station_power_kw) for c in range(n_stations)
    )

    if price_pattern == "flat":
        prices = PriceSeries.flat(flat_price, horizon)
    else:
        lo = int(round(day_start * horizon / 1440))
        hi = int(round(day_end * horizon / 1440))
        bps, vals = [0], [night_price]
        if 0 < lo < horizon:
            bps.append(lo)
            vals.append(day_price)
        elif lo == 0:
            vals[0] = day_price
        if lo < hi < horizon:
            bps.append(hi)
            vals.append(night_price)
        prices = PriceSeries(tuple(bps), tuple(vals), horizon)

    deg = degradation or DegradationParams()
    return Scenario(tuple(requests), stations, fleet, prices, horizon, deg)
