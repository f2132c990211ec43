"""Per-day unit-commitment subproblems and component-status derivation.

Given a first-stage maintenance schedule and a failure realization, each
operational day is independent: hour 1 carries no ramping, min-up/down or
start-up coupling to the previous day, so the scenario problem splits into
one MILP per day.  Within a day the schedule and failure times only matter
through which components are out of service, so subproblems are built from
an availability set and cached under the day's status vector.

A line is on exactly when it is not under maintenance or failed-out, so the
switching variable is data here: available lines carry the Ohm equality and
static flow bounds, unavailable ones are removed with zero flow.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import solver
from .caseio import DemandGrid, Network, RunConfig

__all__ = ["status_bit", "status_vector", "unavailable_components", "DayModel",
           "SubproblemResult", "build_subproblem", "solve_subproblem",
           "lp_lower_bound", "maintenance_cost_coeffs"]


def status_bit(period: int, xi: int, day: int, tau_pred: int, tau_corr: int,
               horizon: int) -> int:
    """Availability of one component on one day (1 = available).

    Maintenance entered at ``period`` before the failure time is predictive
    and takes the component down for ``tau_pred`` days from its start; a
    failure at ``xi`` within the horizon that no earlier maintenance prevented
    takes it down for ``tau_corr`` days from the failure.  Outage windows are
    clamped to the horizon.
    """
    if period < xi:  # predictive maintenance scheduled before failure
        if period <= day <= period + tau_pred - 1:
            return 0
    elif xi <= horizon:  # failed first: corrective outage from the failure day
        if xi <= day <= xi + tau_corr - 1:
            return 0
    return 1


def status_vector(schedule: dict[str, int], xi_map: dict[str, int], day: int,
                  cfg: RunConfig, components: tuple[str, ...],
                  kinds: dict[str, str]) -> tuple[int, ...]:
    """Availability bits of the listed components on ``day`` (hashable)."""
    bits = []
    for comp in components:
        tau_p, tau_c = cfg.tau(kinds[comp])
        period = schedule.get(comp, cfg.tbar)  # unscheduled = never in horizon
        bits.append(status_bit(period, xi_map.get(comp, cfg.tbar), day,
                               tau_p, tau_c, cfg.horizon_days))
    return tuple(bits)


def unavailable_components(components: tuple[str, ...],
                           status: tuple[int, ...]) -> frozenset[str]:
    return frozenset(c for c, bit in zip(components, status) if bit == 0)


def maintenance_cost_coeffs(comp_pred: float, comp_corr: float, xi: int,
                            tbar: int) -> np.ndarray:
    """First-stage cost of maintaining in each period 1..tbar under one scenario.

    Predictive cost before the failure time, corrective cost from it on; a
    component that never fails costs nothing in the no-maintenance slot.
    """
    coeffs = np.empty(tbar)
    for t in range(1, tbar + 1):
        if t < xi:
            coeffs[t - 1] = comp_pred
        elif xi != tbar:
            coeffs[t - 1] = comp_corr
        else:  # t == xi == tbar: no failure and no maintenance
            coeffs[t - 1] = 0.0
    return coeffs


@dataclass
class SubproblemResult:
    objective: float
    status: str
    gap: float
    p: np.ndarray       # (|G|, |S|) generation MW
    x: np.ndarray       # (|G|, |S|) commitment
    u: np.ndarray       # (|G|, |S|) start-up
    nu: np.ndarray      # (|G|, |S|) shut-down
    y: np.ndarray       # (|L|, |S|) line on/off (availability data here)
    f: np.ndarray       # (|L|, |S|) flows MW
    delta: np.ndarray   # (|B|, |S|) angles
    q: np.ndarray       # (|B|, |S|) curtailment MW


class DayModel:
    """Built one-day operational model plus its variable index maps."""

    def __init__(self, net: Network, spec: solver.ModelSpec, subperiods: int,
                 idx: dict[str, np.ndarray], line_on: np.ndarray, label: str):
        self.net = net
        self.spec = spec
        self.subperiods = subperiods
        self.idx = idx
        self.line_on = line_on
        self.label = label

    def extract(self, outcome: solver.SolveOutcome) -> SubproblemResult:
        vals = outcome.x

        def grab(key):
            arr = self.idx[key]
            out = np.zeros(arr.shape)
            mask = arr >= 0
            out[mask] = vals[arr[mask]]
            return out

        return SubproblemResult(objective=float(outcome.objective),
                                status=outcome.status, gap=outcome.gap,
                                p=grab("p"), x=grab("x"), u=grab("u"),
                                nu=grab("nu"), y=self.line_on.copy(),
                                f=grab("f"), delta=grab("delta"), q=grab("q"))

    def export_lp(self) -> str:
        return solver.write_lp(self.spec)


def _curtail_cost(bus, cfg: RunConfig) -> float:
    return cfg.curtail_cost if cfg.curtail_cost is not None else bus.curtail_cost


def _add_bus_vars(spec, net, demand_day, cfg):
    n_bus, s_count = demand_day.shape
    delta = np.empty((n_bus, s_count), dtype=int)
    q = np.empty((n_bus, s_count), dtype=int)
    for i, bus in enumerate(net.buses):
        cost = _curtail_cost(bus, cfg)
        for s in range(s_count):
            delta[i, s] = spec.add_var(f"d{bus.id}_{s}", lb=bus.delta_min,
                                       ub=bus.delta_max)
            # curtailment pays to shed load, never to fabricate injection
            q[i, s] = spec.add_var(f"q{bus.id}_{s}", lb=0.0,
                                   ub=float(demand_day[i, s]), obj=cost)
    return delta, q


def _add_gen_vars(spec, net, s_count, fixed_off: frozenset[str], integer_x: bool):
    n_gen = len(net.generators)
    p = np.empty((n_gen, s_count), dtype=int)
    x = np.empty((n_gen, s_count), dtype=int)
    u = np.empty((n_gen, s_count), dtype=int)
    nu = np.empty((n_gen, s_count), dtype=int)
    for g, gen in enumerate(net.generators):
        off = gen.id in fixed_off
        for s in range(s_count):
            x[g, s] = spec.add_var(f"x{gen.id}_{s}", lb=0.0, ub=0.0 if off else 1.0,
                                   obj=gen.noload_cost, integer=integer_x)
            p[g, s] = spec.add_var(f"p{gen.id}_{s}", lb=0.0, obj=gen.gen_cost)
            u[g, s] = spec.add_var(f"u{gen.id}_{s}", lb=0.0, ub=1.0,
                                   obj=gen.startup_cost)
            nu[g, s] = spec.add_var(f"nu{gen.id}_{s}", lb=0.0, ub=1.0)
    return p, x, u, nu


def _add_gen_rows(spec, net, p, x, u, nu, s_count):
    for g, gen in enumerate(net.generators):
        for s in range(s_count):
            # generation limits tied to commitment
            spec.add_le({p[g, s]: 1.0, x[g, s]: -gen.p_max}, 0.0)
            spec.add_ge({p[g, s]: 1.0, x[g, s]: -gen.p_min}, 0.0)
        for s in range(1, s_count):
            # start-up / shut-down linking
            spec.add_ge({u[g, s]: 1.0, x[g, s]: -1.0, x[g, s - 1]: 1.0}, 0.0)
            spec.add_ge({nu[g, s]: 1.0, x[g, s - 1]: -1.0, x[g, s]: 1.0}, 0.0)
            # ramping between consecutive hours
            spec.add_le({p[g, s]: 1.0, p[g, s - 1]: -1.0}, gen.ramp_up)
            spec.add_le({p[g, s - 1]: 1.0, p[g, s]: -1.0}, gen.ramp_down)
            # minimum up/down within the day
            for sp in range(s + 1, min(s + gen.min_up, s_count)):
                spec.add_le({x[g, s]: 1.0, x[g, s - 1]: -1.0, x[g, sp]: -1.0}, 0.0)
            for sp in range(s + 1, min(s + gen.min_down, s_count)):
                spec.add_le({x[g, s - 1]: 1.0, x[g, s]: -1.0, x[g, sp]: 1.0}, 1.0)


def _add_balance_rows(spec, net, demand_day, p, f, q):
    n_bus, s_count = demand_day.shape
    at_bus = {bus.id: [g for g, gen in enumerate(net.generators) if gen.bus == bus.id]
              for bus in net.buses}
    for i, bus in enumerate(net.buses):
        for s in range(s_count):
            coeffs: dict[int, float] = {q[i, s]: 1.0}
            for g in at_bus[bus.id]:
                coeffs[p[g, s]] = 1.0
            for j, line in enumerate(net.lines):
                if line.from_bus == bus.id:
                    coeffs[f[j, s]] = coeffs.get(f[j, s], 0.0) - 1.0
                if line.to_bus == bus.id:
                    coeffs[f[j, s]] = coeffs.get(f[j, s], 0.0) + 1.0
            spec.add_eq(coeffs, float(demand_day[i, s]))


def build_subproblem(net: Network, demand_day: np.ndarray, unavailable: frozenset[str],
                     cfg: RunConfig, omit_bounds: frozenset = frozenset(),
                     label: str = "day", relax_binaries: bool = False) -> DayModel:
    """One-day MILP: hourly commitment, dispatch, flows, and curtailment.

    ``unavailable`` holds component ids out of service the whole day;
    ``omit_bounds`` holds (line_id, "ub"|"lb", hour) flow-limit rows proven
    redundant by preprocessing.  Curtailment is capped by demand, so every
    availability pattern stays feasible.
    """
    demand_day = np.asarray(demand_day, dtype=float)
    n_bus, s_count = len(net.buses), demand_day.shape[1]
    if demand_day.shape != (n_bus, s_count):
        raise ValueError("demand slice does not match the bus count")
    spec = solver.ModelSpec(label)
    bus_pos = net.bus_index()

    delta, q = _add_bus_vars(spec, net, demand_day, cfg)
    p, x, u, nu = _add_gen_vars(spec, net, s_count, unavailable,
                                integer_x=not relax_binaries)

    n_line = len(net.lines)
    f = np.empty((n_line, s_count), dtype=int)
    line_on = np.ones((n_line, s_count))
    for j, line in enumerate(net.lines):
        down = line.id in unavailable
        b_mw = net.line_susceptance_mw(line)
        fi, ti = bus_pos[line.from_bus], bus_pos[line.to_bus]
        for s in range(s_count):
            if down:
                line_on[j, s] = 0.0
                f[j, s] = spec.add_var(f"f{line.id}_{s}", lb=0.0, ub=0.0)
                continue
            lo = -solver.INF if (line.id, "lb", s) in omit_bounds else -line.flow_limit
            hi = solver.INF if (line.id, "ub", s) in omit_bounds else line.flow_limit
            f[j, s] = spec.add_var(f"f{line.id}_{s}", lb=lo, ub=hi)
            # Ohm's law for in-service lines
            spec.add_eq({f[j, s]: 1.0, delta[fi, s]: -b_mw, delta[ti, s]: b_mw}, 0.0)

    _add_gen_rows(spec, net, p, x, u, nu, s_count)
    _add_balance_rows(spec, net, demand_day, p, f, q)

    idx = {"p": p, "x": x, "u": u, "nu": nu, "f": f, "delta": delta, "q": q}
    return DayModel(net, spec, s_count, idx, line_on, label)


def solve_subproblem(model: DayModel, eps: float = 1e-6,
                     time_limit: float | None = None) -> SubproblemResult:
    outcome = solver.solve(model.spec, tolerance=eps, time_limit=time_limit)
    if outcome.status != "optimal":
        raise solver.SolverError(f"{model.label}: subproblem ended {outcome.status}")
    return model.extract(outcome)


# ---------------------------------------------------------------------------
# Scenario lower bound (relaxed schedule folded into one day's LP)
# ---------------------------------------------------------------------------

def lp_lower_bound(net: Network, demand: DemandGrid, xi_map: dict[str, int],
                   day: int, cfg: RunConfig, candidates: tuple[str, ...],
                   kinds: dict[str, str]) -> float:
    """LP value bounding the day's recourse cost below, over relaxed schedules.

    The maintenance decision enters continuously in [0,1] with its assignment
    rows, availability becomes the induced linear expression, and commitment
    and switching are relaxed.  Every binary schedule is feasible here, so the
    optimum bounds every Q_t from below (and is never worse than zero).
    """
    tbar = cfg.tbar
    demand_day = demand.day(day)
    spec = solver.ModelSpec(f"lb_day{day}")
    bus_pos = net.bus_index()
    periods = range(1, tbar + 1)
    candidate_set = set(candidates)

    v: dict[tuple[str, int], int] = {}
    for comp in candidates:
        for m in periods:
            v[(comp, m)] = spec.add_var(f"v{comp}_{m}", lb=0.0, ub=1.0)
        spec.add_eq({v[(comp, m)]: 1.0 for m in periods}, 1.0)

    def outage_terms(comp: str, kind: str) -> dict[int, float]:
        """Coefficients of sum(v) giving the outage indicator on `day`."""
        xi = xi_map.get(comp, tbar)
        tau_p, tau_c = cfg.tau(kind)
        terms: dict[int, float] = {}
        for m in periods:
            if m < xi and m <= day <= m + tau_p - 1:
                terms[v[(comp, m)]] = 1.0
        if xi <= cfg.horizon_days and xi <= day <= xi + tau_c - 1:
            for m in periods:
                if m >= xi:
                    terms[v[(comp, m)]] = terms.get(v[(comp, m)], 0.0) + 1.0
        return terms

    def fixed_bit(comp: str, kind: str) -> int:
        tau_p, tau_c = cfg.tau(kind)
        return status_bit(tbar, xi_map.get(comp, tbar), day, tau_p, tau_c,
                          cfg.horizon_days)

    hard_off = frozenset(gen.id for gen in net.generators
                         if gen.id not in candidate_set and fixed_bit(gen.id, "gen") == 0)

    delta, q = _add_bus_vars(spec, net, demand_day, cfg)
    p, x, u, nu = _add_gen_vars(spec, net, demand_day.shape[1], hard_off,
                                integer_x=False)
    s_count = demand_day.shape[1]

    for g, gen in enumerate(net.generators):
        if gen.id not in candidate_set:
            continue
        terms = outage_terms(gen.id, "gen")
        if not terms:
            continue
        for s in range(s_count):
            row = dict(terms)
            row[x[g, s]] = 1.0
            spec.add_le(row, 1.0)  # commitment only while not in an outage

    n_line = len(net.lines)
    f = np.empty((n_line, s_count), dtype=int)
    for j, line in enumerate(net.lines):
        b_mw = net.line_susceptance_mw(line)
        fi, ti = bus_pos[line.from_bus], bus_pos[line.to_bus]
        is_candidate = line.id in candidate_set
        down = not is_candidate and fixed_bit(line.id, "line") == 0
        for s in range(s_count):
            if down:
                f[j, s] = spec.add_var(f"f{line.id}_{s}", lb=0.0, ub=0.0)
                continue
            f[j, s] = spec.add_var(f"f{line.id}_{s}", lb=-line.flow_limit,
                                   ub=line.flow_limit)
            if not is_candidate:
                spec.add_eq({f[j, s]: 1.0, delta[fi, s]: -b_mw, delta[ti, s]: b_mw}, 0.0)
                continue
            terms = outage_terms(line.id, "line")
            yv = spec.add_var(f"y{line.id}_{s}", lb=0.0, ub=1.0)
            row = dict(terms)
            row[yv] = 1.0
            spec.add_eq(row, 1.0)  # line is on exactly when not in an outage
            spec.add_le({f[j, s]: 1.0, delta[fi, s]: -b_mw, delta[ti, s]: b_mw,
                         yv: line.big_m}, line.big_m)
            spec.add_ge({f[j, s]: 1.0, delta[fi, s]: -b_mw, delta[ti, s]: b_mw,
                         yv: -line.big_m}, -line.big_m)
            spec.add_le({f[j, s]: 1.0, yv: -line.flow_limit}, 0.0)
            spec.add_ge({f[j, s]: 1.0, yv: line.flow_limit}, 0.0)

    _add_gen_rows(spec, net, p, x, u, nu, s_count)
    _add_balance_rows(spec, net, demand_day, p, f, q)

    outcome = solver.solve(spec, tolerance=1e-9)
    if outcome.status != "optimal":
        raise solver.SolverError(f"lower-bound LP for day {day} ended {outcome.status}")
    return max(0.0, float(outcome.objective))
