"""Relaxed master problem and the optimality-cut families.

The master carries the binary schedule, one recourse variable per scenario
(or per scenario and day when the per-period family is active), the pooled
optimality and chance cuts, and the chance-mode rows.  Cut families, from
weakest to strongest: the classical integer L-shaped cut, the variant that
drops its complement terms, the same-cost strengthening that widens each
component's coefficient set to schedule periods with identical operational
cost, and the per-day same-status strengthening built from status-vector
equality.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import solver
from .caseio import RunConfig
from .chance import LinearCut
from .degrade import ScenarioSet
from .ucmodel import maintenance_cost_coeffs, status_bit

log = logging.getLogger(__name__)

__all__ = ["MasterState", "MasterSolution", "build_master", "cut_int_lshaped",
           "cut_dropped_complement", "cut_same_cost", "cut_same_status",
           "same_cost_periods", "same_status_periods", "aggregate_cuts",
           "theta_granularity"]


def theta_granularity(cfg: RunConfig) -> str:
    return "per_kt" if cfg.cut_family == "optKT++" else "per_k"


# ---------------------------------------------------------------------------
# Cut families
# ---------------------------------------------------------------------------

def _scheduled_pairs(schedule: dict[str, int]) -> list[tuple[str, int]]:
    return sorted(schedule.items())


def cut_int_lshaped(schedule: dict[str, int], theta_key, q_value: float,
                    lower: float, tbar: int) -> LinearCut:
    """Classical integer L-shaped optimality cut, complement terms included."""
    diff = q_value - lower
    n = len(schedule)
    coeffs: dict[tuple[str, int], float] = {}
    for comp, t_star in schedule.items():
        for t in range(1, tbar + 1):
            coeffs[(comp, t)] = diff if t != t_star else -diff
    return LinearCut.make(coeffs, rhs=q_value - diff * n, sense=">=",
                          theta_coeffs={theta_key: 1.0}, name="intLS")


def cut_dropped_complement(schedule: dict[str, int], theta_key, q_value: float,
                           lower: float) -> LinearCut:
    """Stronger cut keeping only the scheduled-period indicators."""
    diff = q_value - lower
    coeffs = {pair: -diff for pair in _scheduled_pairs(schedule)}
    return LinearCut.make(coeffs, rhs=q_value - diff * len(schedule), sense=">=",
                          theta_coeffs={theta_key: 1.0}, name="optK")


def cut_same_cost(schedule: dict[str, int], theta_key, q_value: float,
                  lower: float, that_sets: dict[str, set[int]]) -> LinearCut:
    """Same-cost strengthening: coefficients over each component's T-hat set."""
    diff = q_value - lower
    coeffs: dict[tuple[str, int], float] = {}
    for comp, periods in that_sets.items():
        if schedule[comp] not in periods:
            raise ValueError(f"{comp}: T-hat set must contain the scheduled period")
        for t in periods:
            coeffs[(comp, t)] = -diff
    return LinearCut.make(coeffs, rhs=q_value - diff * len(schedule), sense=">=",
                          theta_coeffs={theta_key: 1.0}, name="optK+")


def cut_same_status(schedule: dict[str, int], theta_key, q_value: float,
                    lower: float, ttilde_sets: dict[str, set[int]]) -> LinearCut:
    """Per-day same-status strengthening over the T-tilde sets."""
    diff = q_value - lower
    coeffs: dict[tuple[str, int], float] = {}
    for comp, periods in ttilde_sets.items():
        if schedule[comp] not in periods:
            raise ValueError(f"{comp}: T-tilde set must contain the scheduled period")
        for t in periods:
            coeffs[(comp, t)] = -diff
    return LinearCut.make(coeffs, rhs=q_value - diff * len(schedule), sense=">=",
                          theta_coeffs={theta_key: 1.0}, name="optKT++")


def same_cost_periods(schedule: dict[str, int], xi_map: dict[str, int],
                      tbar: int) -> dict[str, set[int]]:
    """Periods with identical first+second stage behaviour per component.

    Predictive maintenance pins the single scheduled period; a component that
    failed first behaves the same whenever maintenance lands at or after the
    failure day.
    """
    out: dict[str, set[int]] = {}
    for comp, period in schedule.items():
        xi = xi_map.get(comp, tbar)
        if period < xi:
            out[comp] = {period}
        else:
            out[comp] = set(range(xi, tbar + 1))
    return out


def same_status_periods(schedule: dict[str, int], xi_map: dict[str, int],
                        day: int, cfg: RunConfig,
                        kinds: dict[str, str]) -> dict[str, set[int]]:
    """Periods that leave each component's day-``day`` availability unchanged."""
    out: dict[str, set[int]] = {}
    for comp, period in schedule.items():
        xi = xi_map.get(comp, cfg.tbar)
        tau_p, tau_c = cfg.tau(kinds[comp])
        bit = status_bit(period, xi, day, tau_p, tau_c, cfg.horizon_days)
        out[comp] = {t for t in range(1, cfg.tbar + 1)
                     if status_bit(t, xi, day, tau_p, tau_c, cfg.horizon_days) == bit}
    return out


def aggregate_cuts(cuts: list[LinearCut], name: str = "single") -> LinearCut:
    """Sum a family of per-scenario cuts into one row (the single-cut form)."""
    if not cuts:
        raise ValueError("nothing to aggregate")
    v_coeffs: dict[tuple[str, int], float] = {}
    theta: dict[object, float] = {}
    rhs = 0.0
    for cut in cuts:
        if cut.sense != ">=":
            raise ValueError("can only aggregate optimality cuts")
        rhs += cut.rhs
        for pair, c in cut.v_coeffs:
            v_coeffs[pair] = v_coeffs.get(pair, 0.0) + c
        for key, c in cut.theta_coeffs:
            theta[key] = theta.get(key, 0.0) + c
    return LinearCut.make(v_coeffs, rhs, ">=", theta, name)


# ---------------------------------------------------------------------------
# Master problem
# ---------------------------------------------------------------------------

@dataclass
class MasterSolution:
    status: str
    schedule: dict[str, int]
    theta: dict[object, float]
    objective: float
    bound: float


class MasterState:
    """Growing relaxed master: schedule binaries, recourse variables, cut pools."""

    def __init__(self, hprime: tuple[str, ...], scenarios: ScenarioSet,
                 cfg: RunConfig, cost_of: dict[str, tuple[float, float]],
                 lower_bounds: dict):
        if scenarios.size < 1:
            raise ValueError("master needs at least one scenario")
        self.hprime = tuple(hprime)
        self.scenarios = scenarios
        self.cfg = cfg
        self.granularity = theta_granularity(cfg)
        self.tbar = cfg.tbar
        self.lower_bounds = dict(lower_bounds)
        self.opt_cuts: list[LinearCut] = []
        self.chance_cuts: list[LinearCut] = []
        self.static_rows: list[LinearCut] = []
        self._seen: set = set()

        # expected first-stage cost coefficient per (component, period)
        self.obj_v: dict[tuple[str, int], float] = {}
        self.cost_vectors: dict[int, dict[str, np.ndarray]] = {}
        for k in range(scenarios.size):
            xi = scenarios.xi(k)
            pi = float(scenarios.probs[k])
            per_comp = {}
            for comp in self.hprime:
                pred, corr = cost_of[comp]
                coeffs = maintenance_cost_coeffs(pred, corr, xi.get(comp, self.tbar),
                                                 self.tbar)
                per_comp[comp] = coeffs
                for t in range(1, self.tbar + 1):
                    key = (comp, t)
                    self.obj_v[key] = self.obj_v.get(key, 0.0) + pi * coeffs[t - 1]
            self.cost_vectors[k] = per_comp

        self.theta_keys: list = []
        if self.granularity == "per_kt":
            for k in range(scenarios.size):
                for t in range(1, cfg.horizon_days + 1):
                    self.theta_keys.append((k, t))
        else:
            self.theta_keys = list(range(scenarios.size))
        missing = [key for key in self.theta_keys if key not in self.lower_bounds]
        if missing:
            raise ValueError(f"missing lower bounds for theta keys {missing[:4]}")

    # -- pools ----------------------------------------------------------------

    def add_cut(self, cut: LinearCut, pool: str = "opt") -> bool:
        """Pool a cut unless an identical one is already present."""
        key = cut.key()
        if key in self._seen:
            return False
        self._seen.add(key)
        (self.opt_cuts if pool == "opt" else self.chance_cuts).append(cut)
        return True

    def add_static_row(self, cut: LinearCut) -> None:
        self.static_rows.append(cut)

    def first_stage_cost(self, schedule: dict[str, int], k: int) -> float:
        return float(sum(self.cost_vectors[k][comp][schedule[comp] - 1]
                         for comp in self.hprime))

    def cut_log(self) -> str:
        """One pooled inequality per line, for audit."""
        rows = [str(cut) for cut in self.chance_cuts]
        rows += [str(cut) for cut in self.opt_cuts]
        return "\n".join(rows) + ("\n" if rows else "")

    def export_lp(self) -> str:
        """LP-format text of the current master (all pooled cuts included)."""
        spec, _, _ = self._build_spec()
        return solver.write_lp(spec)

    def theta_weight(self, key) -> float:
        k = key[0] if self.granularity == "per_kt" else key
        return float(self.scenarios.probs[k])

    # -- solving ---------------------------------------------------------------

    def _build_spec(self):
        spec = solver.ModelSpec("master")
        vidx: dict[tuple[str, int], int] = {}
        for comp in self.hprime:
            for t in range(1, self.tbar + 1):
                vidx[(comp, t)] = spec.add_binary(
                    f"v{comp}_{t}", obj=self.obj_v.get((comp, t), 0.0))
            spec.add_eq({vidx[(comp, t)]: 1.0 for t in range(1, self.tbar + 1)}, 1.0)

        tidx: dict[object, int] = {}
        for key in self.theta_keys:
            tidx[key] = spec.add_var(f"theta{key}", lb=float(self.lower_bounds[key]),
                                     obj=self.theta_weight(key))

        for cut in self.static_rows + self.chance_cuts + self.opt_cuts:
            coeffs = {vidx[pair]: c for pair, c in cut.v_coeffs if pair in vidx}
            for key, c in cut.theta_coeffs:
                coeffs[tidx[key]] = coeffs.get(tidx[key], 0.0) + c
            if cut.sense == "<=":
                spec.add_le(coeffs, cut.rhs)
            else:
                spec.add_ge(coeffs, cut.rhs)
        return spec, vidx, tidx

    def solve(self, tolerance: float = 1e-9,
              time_limit: float | None = None) -> MasterSolution:
        spec, vidx, tidx = self._build_spec()
        outcome = solver.solve(spec, tolerance=tolerance, time_limit=time_limit)
        if outcome.status != "optimal":
            return MasterSolution(outcome.status, {}, {}, float("inf"), -float("inf"))
        schedule = {}
        for comp in self.hprime:
            choices = [t for t in range(1, self.tbar + 1)
                       if outcome.x[vidx[(comp, t)]] > 0.5]
            if len(choices) != 1:
                raise solver.SolverError(f"master returned a fractional row for {comp}")
            schedule[comp] = choices[0]
        theta = {key: float(outcome.x[tidx[key]]) for key in self.theta_keys}
        return MasterSolution("optimal", schedule, theta,
                              float(outcome.objective), float(outcome.bound))


def build_master(hprime, scenarios, cfg, cost_of, lower_bounds) -> MasterState:
    return MasterState(hprime, scenarios, cfg, cost_of, lower_bounds)
