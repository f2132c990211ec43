"""Flow-limit redundancy preprocessing.

A single-period relaxation of the operational problem (switching and
commitment continuous, start/stop and ramping dropped, demand free below a
cap) bounds how large each line flow can ever get.  If the relaxed extreme is
strictly inside a static limit, that limit row can never bind and is dropped
from every subproblem it covers.  The three modes trade LP count against cap
tightness: one horizon-wide peak cap, one cap per day, or the exact hourly
demand.
"""

from __future__ import annotations

import io
import logging
import time
from dataclasses import dataclass

import numpy as np

from . import solver
from .caseio import DemandGrid, Network

log = logging.getLogger(__name__)

MODES = ("I", "II", "III")

_STRICT_TOL = 1e-9


@dataclass(frozen=True)
class RedundancyEntry:
    line_id: str
    direction: str        # "ub" | "lb"
    scope: tuple          # () horizon, (t,) day, (t, s) hour; 1-based
    f_star: float
    redundant: bool


@dataclass
class RedundancyReport:
    mode: str
    entries: list[RedundancyEntry]
    elapsed: float

    def omitted_for_day(self, day: int, subperiods: int) -> frozenset:
        """Bound rows deletable on 1-based ``day`` as (line, dir, 0-based hour)."""
        out = set()
        for e in self.entries:
            if not e.redundant:
                continue
            if e.scope == ():
                out.update((e.line_id, e.direction, s) for s in range(subperiods))
            elif len(e.scope) == 1 and e.scope[0] == day:
                out.update((e.line_id, e.direction, s) for s in range(subperiods))
            elif len(e.scope) == 2 and e.scope[0] == day:
                out.add((e.line_id, e.direction, e.scope[1] - 1))
        return frozenset(out)

    def redundancy_ratio(self, direction: str) -> float:
        hits = [e.redundant for e in self.entries if e.direction == direction]
        return sum(hits) / len(hits) if hits else 0.0

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write("line,dir,scope,f_star,redundant\n")
        for e in self.entries:
            scope = ":".join(str(v) for v in e.scope) or "horizon"
            out.write(f"{e.line_id},{e.direction},{scope},{e.f_star:.10g},"
                      f"{int(e.redundant)}\n")
        return out.getvalue()


class _RelaxedFlowLP:
    """Single-period relaxation reused across target lines for one cap vector."""

    def __init__(self, net: Network, demand_cap: np.ndarray,
                 candidate_lines: frozenset[str]):
        if np.any(demand_cap < 0):
            raise ValueError("demand caps must be nonnegative")
        spec = solver.ModelSpec("flow_relax")
        bus_pos = net.bus_index()
        n_bus = len(net.buses)

        d = [spec.add_var(f"dem{b.id}", lb=0.0, ub=float(demand_cap[i]))
             for i, b in enumerate(net.buses)]
        q = [spec.add_var(f"q{b.id}", lb=0.0) for b in net.buses]
        delta = [spec.add_var(f"delta{b.id}", lb=b.delta_min, ub=b.delta_max)
                 for b in net.buses]
        for i in range(n_bus):
            spec.add_le({q[i]: 1.0, d[i]: -1.0}, 0.0)  # curtail at most demand

        p = []
        for gen in net.generators:
            xv = spec.add_var(f"x{gen.id}", lb=0.0, ub=1.0)
            pv = spec.add_var(f"p{gen.id}", lb=0.0)
            spec.add_le({pv: 1.0, xv: -gen.p_max}, 0.0)
            spec.add_ge({pv: 1.0, xv: -gen.p_min}, 0.0)
            p.append(pv)

        self.fvar: dict[str, int] = {}
        for line in net.lines:
            b_mw = net.line_susceptance_mw(line)
            fi, ti = bus_pos[line.from_bus], bus_pos[line.to_bus]
            fv = spec.add_var(f"f{line.id}", lb=-solver.INF, ub=solver.INF)
            self.fvar[line.id] = fv
            if line.id in candidate_lines:
                # switchable: relaxed on/off with big-M Ohm and linked bounds
                yv = spec.add_var(f"y{line.id}", lb=0.0, ub=1.0)
                spec.add_le({fv: 1.0, delta[fi]: -b_mw, delta[ti]: b_mw,
                             yv: line.big_m}, line.big_m)
                spec.add_ge({fv: 1.0, delta[fi]: -b_mw, delta[ti]: b_mw,
                             yv: -line.big_m}, -line.big_m)
                spec.add_le({fv: 1.0, yv: -line.flow_limit}, 0.0)
                spec.add_ge({fv: 1.0, yv: line.flow_limit}, 0.0)
            else:
                # static line: Ohm only; its own limit rows are what we probe
                spec.add_eq({fv: 1.0, delta[fi]: -b_mw, delta[ti]: b_mw}, 0.0)

        for i, bus in enumerate(net.buses):
            coeffs: dict[int, float] = {q[i]: 1.0, d[i]: -1.0}
            for g, gen in enumerate(net.generators):
                if gen.bus == bus.id:
                    coeffs[p[g]] = 1.0
            for line in net.lines:
                fv = self.fvar[line.id]
                if line.from_bus == bus.id:
                    coeffs[fv] = coeffs.get(fv, 0.0) - 1.0
                if line.to_bus == bus.id:
                    coeffs[fv] = coeffs.get(fv, 0.0) + 1.0
            spec.add_eq(coeffs, 0.0)
        self.spec = spec

    def extreme(self, line_id: str, direction: str) -> float:
        """max f (direction "ub") or min f (direction "lb") over the relaxation."""
        for j in range(self.spec.num_vars):
            self.spec.set_obj(j, 0.0)
        self.spec.sense = "max" if direction == "ub" else "min"
        self.spec.set_obj(self.fvar[line_id], 1.0)
        outcome = solver.solve(self.spec, tolerance=1e-9)
        if outcome.status != "optimal":
            raise solver.SolverError(f"flow relaxation for {line_id} ended "
                                     f"{outcome.status}")
        return float(outcome.objective)


def flow_extreme(net: Network, demand_cap: np.ndarray, line_id: str,
                 direction: str, candidate_lines: frozenset[str] = frozenset()) -> float:
    """Extreme flow of one line under one demand-cap vector."""
    return _RelaxedFlowLP(net, demand_cap, candidate_lines).extreme(line_id, direction)


def _cap_vectors(grid: DemandGrid, mode: str):
    if mode == "I":
        yield (), grid.values.max(axis=(1, 2))
    elif mode == "II":
        for t in range(1, grid.periods + 1):
            yield (t,), grid.values[:, t - 1, :].max(axis=1)
    elif mode == "III":
        for t in range(1, grid.periods + 1):
            for s in range(1, grid.subperiods + 1):
                yield (t, s), grid.values[:, t - 1, s - 1]
    else:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")


def analyze(net: Network, grid: DemandGrid, mode: str,
            candidate_lines: frozenset[str] = frozenset()) -> RedundancyReport:
    """Probe every static flow limit of non-candidate lines for redundancy.

    A bound is flagged only when the relaxed extreme is strictly inside it;
    ties stay in the model.  Candidate (switchable) lines keep their linked
    bounds and are never probed.
    """
    started = time.perf_counter()
    entries: list[RedundancyEntry] = []
    targets = [line for line in net.lines if line.id not in candidate_lines]
    for scope, caps in _cap_vectors(grid, mode):
        lp = _RelaxedFlowLP(net, caps, candidate_lines)
        for line in targets:
            hi = lp.extreme(line.id, "ub")
            entries.append(RedundancyEntry(line.id, "ub", scope, hi,
                                           hi < line.flow_limit - _STRICT_TOL))
            lo = lp.extreme(line.id, "lb")
            entries.append(RedundancyEntry(line.id, "lb", scope, lo,
                                           lo > -line.flow_limit + _STRICT_TOL))
    elapsed = time.perf_counter() - started
    report = RedundancyReport(mode, entries, elapsed)
    log.info("flow analysis mode %s: ub ratio %.3f, lb ratio %.3f (%.2fs)",
             mode, report.redundancy_ratio("ub"), report.redundancy_ratio("lb"),
             elapsed)
    return report
