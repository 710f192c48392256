"""Exact charge/discharge amounts for one vehicle along a fixed chain.

Once routes and station visits are fixed, what remains for a vehicle is a
one-dimensional storage problem. Leg ``l`` consumes ``consumption[l]`` kWh and
may exchange ``x_l`` in ``[-discharge_cap_l, cap_l]`` with the grid at marginal cost
``buy_l`` for charging and ``sell_l`` for discharging (``sell_l <= buy_l``).
The battery level after every leg must stay in ``[0, e_max]`` and the last
level must return to ``e0``.

The solution sweeps forward over convex piecewise-linear value functions
``V_l(e)`` = cheapest cost to end leg ``l`` at level ``e``. Adding a leg is an
infimal convolution with the leg's cost, which for convex piecewise-linear
functions amounts to merging both lists of marginal-cost segments in ascending
order: every additional kWh is bought from the cheapest window still able to
deliver it. This is the exchange argument. If an optimal plan bought a kWh in
window ``a`` while a cheaper unused kWh was reachable in window ``b``, moving
that kWh to ``b`` would stay inside the band and lower the cost. Clipping the
domain to the band enforces the level bounds. A backward pass recovers the
amounts, so the result is the exact LP optimum, not a heuristic.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

_EPS = 1e-12


@dataclass(frozen=True)
class Window:
    consumption: float
    cap: float = 0.0
    buy: float = 0.0
    sell: float = 0.0
    discharge_cap: Optional[float] = None  # defaults to cap

    @property
    def dcap(self) -> float:
        return self.cap if self.discharge_cap is None else self.discharge_cap

    def cost(self, x: float) -> float:
        return self.buy * x if x >= 0 else self.sell * x


@dataclass
class _PWL:
    """Convex piecewise-linear function on ``[lo, lo + sum(lengths)]``."""

    lo: float
    v_lo: float
    segs: list  # [(length, slope)] with non-decreasing slopes

    @property
    def hi(self) -> float:
        return self.lo + sum(length for length, _ in self.segs)

    def breakpoints(self):
        x = self.lo
        yield x
        for length, _ in self.segs:
            x += length
            yield x

    def __call__(self, e: float) -> float:
        if e < self.lo - 1e-9 or e > self.hi + 1e-9:
            return float("inf")
        rest = e - self.lo
        val = self.v_lo
        for length, slope in self.segs:
            step = min(length, max(rest, 0.0))
            val += step * slope
            rest -= step
            if rest <= 0:
                break
        return val

    def clip(self, lo: float, hi: float) -> Optional["_PWL"]:
        new_lo = max(lo, self.lo)
        new_hi = min(hi, self.hi)
        if new_hi < new_lo - 1e-9:
            return None
        new_hi = max(new_hi, new_lo)
        v = self(new_lo)
        segs, x = [], self.lo
        for length, slope in self.segs:
            a, b = max(x, new_lo), min(x + length, new_hi)
            if b - a > _EPS:
                segs.append((b - a, slope))
            x += length
        return _PWL(new_lo, v, segs)


def _convolve(v: _PWL, w: Window) -> _PWL:
    """``min_x v(e + consumption - x) + w.cost(x)`` as a function of ``e``."""
    segs = list(v.segs)
    if w.dcap > _EPS:
        segs.append((w.dcap, w.sell))
    if w.cap > _EPS:
        segs.append((w.cap, w.buy))
    segs.sort(key=lambda s: s[1])
    lo = v.lo - w.dcap - w.consumption
    return _PWL(lo, v.v_lo + w.cost(-w.dcap), segs)


@dataclass
class ChainSolution:
    cost: float
    exchange: list  # signed kWh per leg, positive = charge
    levels: list  # battery level after every leg


def solve_chain(windows: Sequence[Window], e0: float, e_max: float) -> Optional[ChainSolution]:
    """Cheapest exchange plan along ``windows`` or None if no plan exists."""
    values = [_PWL(e0, 0.0, [])]
    last = len(windows) - 1
    for n, w in enumerate(windows):
        v = _convolve(values[-1], w)
        v = v.clip(e0, e0) if n == last else v.clip(0.0, e_max)
        if v is None:
            return None
        values.append(v)
    if not windows:
        return ChainSolution(0.0, [], [])

    exchange = [0.0] * len(windows)
    levels = [0.0] * len(windows)
    e = e0
    for n in range(len(windows) - 1, -1, -1):
        w, prev = windows[n], values[n]
        levels[n] = e
        base = e + w.consumption
        # x must keep the previous level inside prev's domain
        x_lo = max(-w.dcap, base - prev.hi)
        x_hi = min(w.cap, base - prev.lo)
        if x_hi < x_lo:  # rounding at a domain edge
            x_hi = x_lo
        candidates = {x_lo, x_hi}
        if x_lo <= 0.0 <= x_hi:
            candidates.add(0.0)
        for b in prev.breakpoints():
            x = base - b
            if x_lo <= x <= x_hi:
                candidates.add(x)
        best = min(candidates, key=lambda x: (prev(base - x) + w.cost(x), abs(x), x))
        exchange[n] = 0.0 if abs(best) < 1e-12 else best
        e = base - best
    return ChainSolution(values[-1](e0), exchange, levels)
