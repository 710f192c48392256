"""Solve a :class:`MILPModel` through solver exchange files or in process.

Backends:

``external-command``
    Writes free MPS, runs a command template with ``{mps}``, ``{sol}``,
    ``{gap}``, ``{timelimit}`` and ``{threads}`` placeholders and parses the
    solution file. Two dialects are understood: CBC style (a status line,
    then ``index name value [reduced cost]`` rows) and plain ``name value``
    rows with optional ``#`` or ``objective`` headers.
``highs``
    ``scipy.optimize.milp`` (HiGHS) in process.
``builtin-tiny``
    Exhaustive enumeration of the binaries, for models with at most 25 of them.

Whatever the backend returns is re-checked against every model row; values
from files are polished by fixing the binaries and re-solving the remaining
LP in double precision.
"""
from __future__ import annotations

import functools
import logging
import os
import re
import shlex
import shutil
import subprocess
import tempfile
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

from .energy import Window, solve_chain
from .model import BINARY, EQ, GE, LE, MILPModel, ModelError, parse_name

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
GAP_FEASIBLE = "gap-feasible"
INFEASIBLE = "infeasible"
TIMEOUT = "timeout-no-solution"

BACKENDS = ("external-command", "highs", "builtin-tiny")
TINY_MAX_BINARIES = 25
CHECK_TOL = 1e-6


class SolverError(RuntimeError):
    """Solver crashed or produced output that could not be used."""

    def __init__(self, message, raw_output: str = ""):
        super().__init__(message)
        self.raw_output = raw_output


@functools.lru_cache(maxsize=1)
def find_cbc() -> Optional[str]:
    """Path of a CBC executable: PATH first, then the copy bundled with PuLP."""
    path = shutil.which("cbc")
    if path:
        return path
    try:
        import pulp
    except ImportError:
        return None
    with warnings.catch_warnings():
        # PuLP flags its bundled-binary wrapper as deprecated; only the path is used
        warnings.simplefilter("ignore", DeprecationWarning)
        cmd = pulp.PULP_CBC_CMD()
        return cmd.path if cmd.available() else None


def default_solver_command() -> Optional[str]:
    env = os.environ.get("EVMAAS_SOLVER_CMD")
    if env:
        return env
    cbc = find_cbc()
    if cbc is None:
        return None
    return (f"{shlex.quote(cbc)} {{mps}} ratioGap {{gap}} allowableGap 1e-9 "
            "seconds {timelimit} threads {threads} randomSeed 1 solve solution {sol}")


@dataclass
class SolveSettings:
    backend: str = "external-command"
    solver_command: Optional[str] = None
    mip_gap: float = 1e-4
    time_limit: float = 600.0
    threads: int = 1
    polish: bool = True

    def __post_init__(self):
        if self.backend not in BACKENDS:
            raise ValueError(f"unknown backend {self.backend!r}")
        if self.mip_gap < 0:
            raise ValueError("mip_gap must be >= 0")
        if not self.time_limit > 0:
            raise ValueError("time_limit must be positive")


@dataclass
class SolveResult:
    status: str
    objective: float = float("nan")
    bound: float = float("nan")
    values: dict = field(default_factory=dict)
    wall_time: float = 0.0
    raw_output: str = ""

    @property
    def has_solution(self) -> bool:
        return self.status in (OPTIMAL, GAP_FEASIBLE)


# ---------------------------------------------------------------------------
# MPS
# ---------------------------------------------------------------------------

def _num(v: float) -> str:
    return repr(float(v))


def write_mps(model: MILPModel, path, name: str = "EVMAAS") -> Path:
    """Free-format MPS; integrality via MARKER lines, bounds in BOUNDS."""
    path = Path(path)
    for n in model.names + [r.name for r in model.constraints]:
        if len(n) > 255 or " " in n:
            raise ModelError(f"name {n!r} not representable in MPS")
    rows_of = [[] for _ in range(model.n_vars)]
    for row in model.constraints:
        for v, a in row.coefs.items():
            rows_of[v].append((row.name, a))
    sense = {LE: "L", GE: "G", EQ: "E"}
    lines = [f"NAME {name}", "OBJSENSE", "    MIN", "ROWS", " N OBJ"]
    lines += [f" {sense[r.sense]} {r.name}" for r in model.constraints]
    lines.append("COLUMNS")
    in_int = False
    marker = 0
    for v, vname in enumerate(model.names):
        is_int = model.kinds[v] == BINARY
        if is_int != in_int:
            tag = "INTORG" if is_int else "INTEND"
            lines.append(f"    MARKER{marker} 'MARKER' '{tag}'")
            marker += 1
            in_int = is_int
        entries = ([("OBJ", model.obj[v])] if model.obj[v] != 0 else []) + rows_of[v]
        if not entries:
            # keep every column declared even if it appears nowhere
            entries = [("OBJ", 0.0)]
        for rname, a in entries:
            lines.append(f"    {vname} {rname} {_num(a)}")
    if in_int:
        lines.append(f"    MARKER{marker} 'MARKER' 'INTEND'")
    lines.append("RHS")
    for r in model.constraints:
        if r.rhs != 0:
            lines.append(f"    RHS {r.name} {_num(r.rhs)}")
    lines.append("BOUNDS")
    for v, vname in enumerate(model.names):
        lo, hi = model.lb[v], model.ub[v]
        if lo == hi:
            lines.append(f" FX BND {vname} {_num(lo)}")
            continue
        if lo != 0:
            lines.append(f" LO BND {vname} {_num(lo)}")
        lines.append(f" UP BND {vname} {_num(hi)}")
    lines.append("ENDATA")
    path.write_text("\n".join(lines) + "\n")
    return path


# ---------------------------------------------------------------------------
# Solution files
# ---------------------------------------------------------------------------

_CBC_STATUS = re.compile(r"^\s*(optimal|infeasible|integer infeasible|unbounded|stopped on|"
                         r"no feasible|linear relaxation)", re.I)


def parse_solution(text: str, names) -> tuple:
    """Return ``(status_word, objective or None, {name: value})``.

    ``status_word`` is one of ``optimal``, ``infeasible``, ``stopped`` or
    ``unknown``. Unknown names are ignored; missing names are taken as 0.
    """
    known = set(names)
    lines = [ln for ln in text.splitlines() if ln.strip()]
    status, objective = "unknown", None
    values = {}
    if lines and _CBC_STATUS.match(lines[0]):
        head = lines[0].lower()
        if head.startswith("optimal"):
            status = "optimal"
        elif "infeasible" in head or head.startswith("no feasible"):
            status = "infeasible"
        elif head.startswith("stopped"):
            status = "stopped"
        m = re.search(r"objective value\s+(\S+)", lines[0], re.I)
        if m:
            objective = float(m.group(1))
        for ln in lines[1:]:
            parts = ln.split()
            if parts and parts[0] == "**":  # CBC flags infeasible rows/columns with '**'
                parts = parts[1:]
            if len(parts) >= 3 and parts[1] in known:
                values[parts[1]] = float(parts[2])
        return status, objective, values

    for ln in lines:
        s = ln.strip()
        low = s.lower()
        if s.startswith("#") or low.startswith(("objective", "status", "solution status")):
            m = re.search(r"(?:objective value|objective)\s*[:=]?\s*(-?[\d.eE+-]+)", s, re.I)
            if m:
                objective = float(m.group(1))
            if "infeasible" in low:
                status = "infeasible"
            elif "optimal" in low:
                status = "optimal"
            continue
        parts = s.split()
        if len(parts) >= 2 and parts[0] in known:
            values[parts[0]] = float(parts[1])
    return status, objective, values


def _best_bound(output: str) -> Optional[float]:
    m = re.findall(r"best possible\s*[:=]?\s*(-?[\d.eE+-]+)", output, re.I)
    return float(m[-1]) if m else None


# ---------------------------------------------------------------------------
# Solving
# ---------------------------------------------------------------------------

def polish(model: MILPModel, values: dict) -> Optional[np.ndarray]:
    """Fix rounded binaries and re-solve the continuous LP exactly."""
    x = model.as_vector(values)
    lb, ub = np.array(model.lb), np.array(model.ub)
    for v in model.binaries:
        lb[v] = ub[v] = float(round(x[v]))
    a, lo, hi = model.matrix()
    if a.shape[0] == 0:
        return lb.copy() if np.all(lb == ub) else np.clip(x, lb, ub)
    eq = lo == hi
    up = ~eq & np.isfinite(hi)
    down = ~eq & np.isfinite(lo)
    a_ub = sp.vstack([a[up], -a[down]]).tocsr()
    b_ub = np.concatenate([hi[up], -lo[down]])
    res = linprog(model.obj,
                  A_ub=a_ub if a_ub.shape[0] else None, b_ub=b_ub if a_ub.shape[0] else None,
                  A_eq=a[eq] if eq.any() else None, b_eq=hi[eq] if eq.any() else None,
                  bounds=list(zip(lb, ub)), method="highs")
    if res.status != 0:
        return None
    out = res.x.copy()
    out[model.binaries] = lb[model.binaries]
    return out


def net_exchange(model: MILPModel, x) -> np.ndarray:
    """Cancel simultaneous charge and discharge on the same station visit.

    Replacing ``(Cp, Cm)`` by ``((Cp - Cm)+, (Cm - Cp)+)`` leaves every
    balance row unchanged, relaxes the capacity row and lowers the objective
    by ``2 (mc + tie-break) min(Cp, Cm)``. LP tolerances are far above the
    1e-9 tie-break, so solvers do not do this reliably themselves.
    """
    x = np.array(x, dtype=float)
    for name, v in model.index.items():
        if name.startswith("Cp_"):
            w = model.index["Cm_" + name[3:]]
            common = min(x[v], x[w])
            if common > 0:
                x[v] -= common
                x[w] -= common
    return x


def _finish(model: MILPModel, status: str, x, bound, t0, raw="") -> SolveResult:
    x = net_exchange(model, x)
    values = {n: float(v) for n, v in zip(model.names, x)}
    bad = model.violations(x, CHECK_TOL)
    if bad:
        raise SolverError(f"solver values violate the model: {bad[:3]}", raw)
    obj = model.objective_value(x)
    if bound is None or not np.isfinite(bound):
        bound = obj if status == OPTIMAL else float("nan")
    return SolveResult(status, obj, float(bound), values, time.perf_counter() - t0, raw)


def solve(model: MILPModel, settings: Optional[SolveSettings] = None) -> SolveResult:
    settings = settings or SolveSettings()
    model.validate()
    if settings.backend == "builtin-tiny":
        return solve_tiny(model)
    if settings.backend == "highs":
        return _solve_highs(model, settings)
    return _solve_external(model, settings)


def _solve_highs(model: MILPModel, settings: SolveSettings) -> SolveResult:
    t0 = time.perf_counter()
    if model.n_vars == 0:
        return SolveResult(OPTIMAL, 0.0, 0.0, {}, time.perf_counter() - t0)
    a, lo, hi = model.matrix()
    cons = [LinearConstraint(a, lo, hi)] if a.shape[0] else []
    integrality = np.array([1 if k == BINARY else 0 for k in model.kinds])
    res = milp(np.array(model.obj), constraints=cons, integrality=integrality,
               bounds=Bounds(np.array(model.lb), np.array(model.ub)),
               options={"mip_rel_gap": settings.mip_gap, "time_limit": settings.time_limit,
                        "disp": False})
    if res.status == 2:
        return SolveResult(INFEASIBLE, wall_time=time.perf_counter() - t0, raw_output=res.message)
    if res.x is None:
        if res.status == 1:
            return SolveResult(TIMEOUT, wall_time=time.perf_counter() - t0,
                               raw_output=res.message)
        raise SolverError(f"HiGHS failed: {res.message}", res.message)
    status = OPTIMAL if res.status == 0 else GAP_FEASIBLE
    x = res.x.copy()
    if settings.polish:
        polished = polish(model, dict(zip(model.names, x)))
        if polished is not None:
            x = polished
    bound = getattr(res, "mip_dual_bound", None)
    return _finish(model, status, x, bound, t0, res.message)


def _solve_external(model: MILPModel, settings: SolveSettings) -> SolveResult:
    template = settings.solver_command or default_solver_command()
    if not template:
        raise SolverError("no solver command; pass --solver-cmd or set EVMAAS_SOLVER_CMD")
    t0 = time.perf_counter()
    with tempfile.TemporaryDirectory(prefix="evmaas-") as tmp:
        mps = Path(tmp) / "model.mps"
        sol = Path(tmp) / "model.sol"
        write_mps(model, mps)
        cmd = template.format(mps=shlex.quote(str(mps)), sol=shlex.quote(str(sol)),
                              gap=settings.mip_gap, timelimit=settings.time_limit,
                              threads=settings.threads)
        log.debug("running %s", cmd)
        try:
            # CBC counts CPU seconds; leave room for wall-clock overrun before killing it
            proc = subprocess.run(cmd, shell=True, capture_output=True, text=True,
                                  timeout=2 * settings.time_limit + 120)
        except subprocess.TimeoutExpired as exc:
            raise SolverError("solver did not return", str(exc.stdout or "")) from None
        raw = proc.stdout + proc.stderr
        if not sol.exists():
            if re.search(r"infeasible", raw, re.I):
                return SolveResult(INFEASIBLE, wall_time=time.perf_counter() - t0, raw_output=raw)
            raise SolverError(f"solver exited {proc.returncode} without a solution file", raw)
        text = sol.read_text()
    try:
        status_word, _, parsed = parse_solution(text, model.names)
    except ValueError as exc:
        raise SolverError(f"unparseable solution file: {exc}", raw + "\n" + text) from None
    if status_word == "infeasible":
        return SolveResult(INFEASIBLE, wall_time=time.perf_counter() - t0, raw_output=raw)
    if status_word == "unknown" and not parsed and model.n_vars:
        raise SolverError("could not parse the solution file", raw + text)
    x = model.as_vector(parsed)
    if settings.polish:
        polished = polish(model, parsed)
        if polished is None:
            if status_word == "stopped":
                return SolveResult(TIMEOUT, wall_time=time.perf_counter() - t0, raw_output=raw)
            raise SolverError("solution does not satisfy the model", raw + text)
        x = polished
    elif model.violations(x, CHECK_TOL):
        if status_word == "stopped":
            return SolveResult(TIMEOUT, wall_time=time.perf_counter() - t0, raw_output=raw)
    status = OPTIMAL if status_word == "optimal" else GAP_FEASIBLE
    return _finish(model, status, x, _best_bound(raw), t0, raw)


# ---------------------------------------------------------------------------
# Enumeration backend
# ---------------------------------------------------------------------------

def _activity_ok(row, fixed: dict, lb, ub, binary_set) -> bool:
    """Can ``row`` still hold given the binaries fixed so far?"""
    lo = hi = 0.0
    for v, a in row.coefs.items():
        if v in fixed:
            lo += a * fixed[v]
            hi += a * fixed[v]
        else:
            lo_v, hi_v = (0.0, 1.0) if v in binary_set else (lb[v], ub[v])
            lo += min(a * lo_v, a * hi_v)
            hi += max(a * lo_v, a * hi_v)
    if row.sense == LE:
        return lo <= row.rhs + 1e-9
    if row.sense == GE:
        return hi >= row.rhs - 1e-9
    return lo <= row.rhs + 1e-9 and hi >= row.rhs - 1e-9


def _continuous_part(model: MILPModel, fixed: dict) -> Optional[np.ndarray]:
    """Exact continuous completion for one binary assignment, or None.

    Reads the fixed transitions from the variable names, the exchange limits
    and leg consumption from the rows with the binaries substituted, the
    marginal prices from the objective, then runs the chain solver.
    """
    ix = model.index
    x = np.zeros(model.n_vars)
    for v, val in fixed.items():
        x[v] = val
    rows = {r.name: r for r in model.constraints}
    e_fixed = {}
    succ = {}
    for v in model.binaries:
        kind, idx = parse_name(model.names[v])
        if kind == "X" and fixed[v] == 1:
            i, j, k = idx
            if (i, k) in succ:
                return None
            succ[(i, k)] = j
    for name, v in ix.items():
        kind, idx = parse_name(name)
        if kind == "E" and model.lb[v] == model.ub[v]:
            e_fixed[idx] = model.lb[v]
    vehicles = sorted({k for (_, k) in succ})
    if not vehicles:
        # no transition selected at all: only valid if the model has no vehicles
        return x
    for k in vehicles:
        chain = [0]
        while (chain[-1], k) in succ and len(chain) <= len(succ) + 1:
            chain.append(succ[(chain[-1], k)])
        sink = chain[-1]
        e0 = e_fixed.get((0, k))
        if e0 is None or e_fixed.get((sink, k)) != e0:
            return None
        windows, legs = [], []
        e_max = max(model.ub[ix[f"E_{j}_{k}"]] for j in chain[1:-1]) if len(chain) > 2 else e0
        for i, j in zip(chain, chain[1:]):
            row = rows[f"ebal_up_{i}_{j}_{k}"]
            residual = row.rhs - sum(a * fixed[v] for v, a in row.coefs.items() if v in fixed)
            consumption = -residual
            station = None
            for v, a in row.coefs.items():
                kind, idx = parse_name(model.names[v])
                if kind == "S" and fixed[v] == 1:
                    station = idx[3]
            if station is not None:
                cpv = ix[f"Cp_{i}_{j}_{k}_{station}"]
                cmv = ix[f"Cm_{i}_{j}_{k}_{station}"]
                cap_row = rows[f"cap_{i}_{j}_{k}_{station}"]
                limit = cap_row.rhs - sum(a * fixed[v] for v, a in cap_row.coefs.items()
                                          if v in fixed)
                legs.append((i, j, station, cpv, cmv))
                windows.append(Window(consumption, min(limit, model.ub[cpv]),
                                      model.obj[cpv], -model.obj[cmv],
                                      discharge_cap=min(limit, model.ub[cmv])))
            else:
                legs.append((i, j, None, None, None))
                windows.append(Window(consumption))
        sol = solve_chain(windows, e0, e_max)
        if sol is None:
            return None
        for (i, j, station, cpv, cmv), q, level in zip(legs, sol.exchange, sol.levels):
            if station is not None:
                x[cpv] = max(q, 0.0)
                x[cmv] = max(-q, 0.0)
            x[ix[f"E_{j}_{k}"]] = level
        x[ix[f"E_0_{k}"]] = e0
    # energies of nodes a vehicle does not visit are unconstrained; leave at lb
    for name, v in ix.items():
        if name.startswith("E_") and x[v] == 0.0:
            x[v] = model.lb[v]
    return x


def solve_tiny(model: MILPModel, max_binaries: int = TINY_MAX_BINARIES) -> SolveResult:
    """Global optimum by enumerating every binary assignment."""
    t0 = time.perf_counter()
    model.validate()
    bins = model.binaries
    if len(bins) > max_binaries:
        raise SolverError(f"{len(bins)} binaries exceed the limit of {max_binaries}; "
                          "use external backend")
    binary_set = set(bins)
    touching = {v: [] for v in bins}
    for row in model.constraints:
        for v in row.coefs:
            if v in touching:
                touching[v].append(row)

    best = None
    fixed: dict = {}

    def dfs(pos: int):
        nonlocal best
        if pos == len(bins):
            x = _continuous_part(model, fixed)
            if x is None or model.violations(x, CHECK_TOL):
                return
            val = model.objective_value(x)
            if best is None or val < best[0] - 1e-12:
                best = (val, x)
            return
        v = bins[pos]
        for val in (0.0, 1.0):
            if val < model.lb[v] or val > model.ub[v]:
                continue
            fixed[v] = val
            if all(_activity_ok(r, fixed, model.lb, model.ub, binary_set) for r in touching[v]):
                dfs(pos + 1)
            del fixed[v]

    dfs(0)
    if best is None:
        return SolveResult(INFEASIBLE, wall_time=time.perf_counter() - t0)
    return _finish(model, OPTIMAL, best[1], best[0], t0)
