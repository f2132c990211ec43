"""Decomposition loop: relaxed master, chance separation, cached subproblems.

One iteration solves the master for a candidate schedule, checks it against
the joint chance constraint (exact oracle separation, or tangent cuts on the
safe product region), derives the per-day status vectors of all scenarios,
solves only the subproblems whose status has never been seen, aliases the
rest from the cache, and strengthens the master with the configured
optimality-cut family.  The loop stops at the configured relative gap.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from . import chance, mastercuts, solver, ucmodel
from .caseio import RunConfig
from .degrade import ScenarioSet
from .instance import Instance

log = logging.getLogger(__name__)

__all__ = ["StatusCache", "SolveReport", "DecompositionRun",
           "compute_lower_bounds", "solve"]


class StatusCache:
    """Per-day map of seen status vectors to their subproblem values."""

    def __init__(self):
        self.psi: dict[int, dict[tuple, tuple[float, float]]] = {}
        self.solved = 0
        self.aliased = 0

    def lookup(self, day: int, status: tuple):
        return self.psi.get(day, {}).get(status)

    def store(self, day: int, status: tuple, objective: float, bound: float):
        self.psi.setdefault(day, {})[status] = (objective, bound)
        self.solved += 1

    @property
    def psi_total(self) -> int:
        return sum(len(v) for v in self.psi.values())


@dataclass
class SolveReport:
    status: str                  # "optimal" | "limit" | "infeasible"
    schedule: dict[str, int]
    objective: float             # best upper bound
    bound: float                 # final lower bound
    gap: float
    iterations: int
    counts: dict[str, int] = field(default_factory=dict)
    history: list[dict] = field(default_factory=list)
    elapsed: float = 0.0
    cut_log: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


def _relative_gap(ub: float, lb: float) -> float:
    if ub == float("inf"):
        return float("inf")
    if abs(ub) < 1e-12:
        return 0.0 if lb >= -1e-9 else float("inf")
    return (ub - lb) / abs(ub)


def compute_lower_bounds(inst: Instance, scenarios: ScenarioSet,
                         cfg: RunConfig) -> dict[tuple[int, int], float]:
    """Per-(scenario, day) LP lower bounds, solved up front (parallel)."""
    kinds = inst.kinds
    tasks = [(k, t) for k in range(scenarios.size)
             for t in range(1, cfg.horizon_days + 1)]

    def one(task):
        k, t = task
        return ucmodel.lp_lower_bound(inst.net, inst.demand, scenarios.xi(k), t,
                                      cfg, inst.hprime, kinds)

    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            values = list(pool.map(one, tasks))
    else:
        values = [one(task) for task in tasks]
    return dict(zip(tasks, values))


def _theta_lower_bounds(day_bounds: dict, scenarios: ScenarioSet,
                        cfg: RunConfig) -> dict:
    if mastercuts.theta_granularity(cfg) == "per_kt":
        return dict(day_bounds)
    return {k: sum(day_bounds[(k, t)] for t in range(1, cfg.horizon_days + 1))
            for k in range(scenarios.size)}


def _day_values(inst: Instance, scenarios: ScenarioSet, cfg: RunConfig,
                schedule: dict[str, int], cache: StatusCache,
                counters: dict) -> dict[tuple[int, int], tuple[float, float]]:
    """Q_t for every (k, t), solving each unseen status vector exactly once."""
    kinds = inst.kinds
    new_tasks: dict[tuple[int, tuple], list[tuple[int, int]]] = {}
    resolved: dict[tuple[int, int], tuple[float, float]] = {}
    for k in range(scenarios.size):
        xi = scenarios.xi(k)
        for t in range(1, cfg.horizon_days + 1):
            status = ucmodel.status_vector(schedule, xi, t, cfg, inst.hprime, kinds)
            hit = cache.lookup(t, status)
            if hit is not None:
                resolved[(k, t)] = hit
                cache.aliased += 1
                counters["aliased"] += 1
            else:
                new_tasks.setdefault((t, status), []).append((k, t))

    def solve_one(key):
        t, status = key
        down = ucmodel.unavailable_components(inst.hprime, status)
        model = ucmodel.build_subproblem(
            inst.net, inst.demand.day(t), down, cfg,
            omit_bounds=inst.omit_bounds_for(t, down),
            label=f"day{t}:{''.join(map(str, status))}")
        outcome = solver.solve(model.spec, tolerance=cfg.subproblem_gap)
        if outcome.status != "optimal":
            raise solver.SolverError(
                f"subproblem day {t} status {status} ended {outcome.status}")
        return key, float(outcome.objective), float(outcome.bound)

    keys = sorted(new_tasks, key=lambda kt: (kt[0], kt[1]))
    if cfg.threads > 1 and len(keys) > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(solve_one, keys))
    else:
        results = [solve_one(key) for key in keys]

    for (t, status), objective, bound in results:
        cache.store(t, status, objective, bound)
        counters["solved"] += 1
        first, *rest = new_tasks[(t, status)]
        resolved[first] = (objective, bound)
        for kt in rest:  # same-iteration duplicates alias the fresh value
            resolved[kt] = (objective, bound)
            cache.aliased += 1
            counters["aliased"] += 1
    return resolved


def _optimality_cuts(master: mastercuts.MasterState, inst: Instance,
                     scenarios: ScenarioSet, cfg: RunConfig,
                     schedule: dict[str, int], day_vals: dict,
                     day_bounds: dict) -> list[chance.LinearCut]:
    cuts = []
    horizon = cfg.horizon_days
    if cfg.cut_family == "optKT++":
        kinds = inst.kinds
        for k in range(scenarios.size):
            xi = scenarios.xi(k)
            for t in range(1, horizon + 1):
                q_bound = day_vals[(k, t)][1]
                ttilde = mastercuts.same_status_periods(schedule, xi, t, cfg, kinds)
                cuts.append(mastercuts.cut_same_status(
                    schedule, (k, t), q_bound, day_bounds[(k, t)], ttilde))
        return cuts

    per_k = []
    for k in range(scenarios.size):
        q_bound = sum(day_vals[(k, t)][1] for t in range(1, horizon + 1))
        lower = sum(day_bounds[(k, t)] for t in range(1, horizon + 1))
        if cfg.cut_family == "intLS":
            per_k.append(mastercuts.cut_int_lshaped(schedule, k, q_bound, lower,
                                                    cfg.tbar))
        elif cfg.cut_family == "optK":
            per_k.append(mastercuts.cut_dropped_complement(schedule, k, q_bound,
                                                           lower))
        else:  # optK+
            that = mastercuts.same_cost_periods(schedule, scenarios.xi(k), cfg.tbar)
            per_k.append(mastercuts.cut_same_cost(schedule, k, q_bound, lower, that))
    if cfg.aggregation == "single" and per_k:
        return [mastercuts.aggregate_cuts(per_k, name=f"{cfg.cut_family}-single")]
    return per_k


class DecompositionRun:
    """Mutable loop state: master, cache, bounds, incumbent, tallies."""

    def __init__(self, inst: Instance, scenarios: ScenarioSet, cfg: RunConfig,
                 enforce_chance: bool = True, cache: StatusCache | None = None,
                 day_bounds: dict | None = None):
        self.inst = inst
        self.scenarios = scenarios
        self.cfg = cfg
        self.started = time.perf_counter()
        self.cache = cache if cache is not None else StatusCache()
        self.day_bounds = day_bounds if day_bounds is not None \
            else compute_lower_bounds(inst, scenarios, cfg)
        cost_of = {comp: inst.maint_cost(comp) for comp in inst.hprime}
        self.master = mastercuts.build_master(
            inst.hprime, scenarios, cfg, cost_of,
            _theta_lower_bounds(self.day_bounds, scenarios, cfg))

        self.chance_mode = cfg.chance_mode if enforce_chance else "off"
        self.block = None
        if self.chance_mode == "safe":
            self.block = chance.safe_block(inst.table, cfg.rho_gen, cfg.rho_line,
                                           cfg.alpha)
            if cfg.soc_mode == "conic" and not solver.supports_cones():
                log.warning("backend has no conic support; product row handled "
                            "by outer approximation")
            # reliability levels live in [0, 1]: class loads can never exceed one
            self.master.add_static_row(chance.xy_cut_to_master(
                chance.XYCut(1.0, 0.0, 1.0), self.block, name="gen_load_cap"))
            self.master.add_static_row(chance.xy_cut_to_master(
                chance.XYCut(0.0, 1.0, 1.0), self.block, name="line_load_cap"))

        self.counters = {"solved": 0, "aliased": 0, "chance_cuts": 0,
                         "opt_cuts": 0}
        self.ub, self.lb = float("inf"), -float("inf")
        self.incumbent: dict[str, int] = {}
        self.history: list[dict] = []
        self.status: str | None = None
        self.iterations = 0

    def iterate_once(self) -> bool:
        """One master solve plus its chance/second-stage follow-up.

        Returns True while the loop should continue; on termination
        ``self.status`` holds the outcome.
        """
        cfg = self.cfg
        self.iterations += 1
        # the proven master bound feeds LB, so a master gap one order tighter
        # than the loop tolerance keeps convergence honest without paying for
        # exact branch-and-bound every round
        ms = self.master.solve(tolerance=max(cfg.epsilon * 0.1, 1e-9),
                               time_limit=cfg.time_limit)
        if ms.status != "optimal":
            self.status = "infeasible" if ms.status == "infeasible" else "limit"
            return False

        if self.chance_mode == "exact":
            feasible, cut, pv = chance.separate(ms.schedule, self.inst.table,
                                                cfg.rho_gen, cfg.rho_line,
                                                cfg.alpha)
            if not feasible:
                if not ms.schedule:
                    self.status = "infeasible"  # no schedule can lift a fixed P(v)
                    return False
                if not self.master.add_cut(cut, pool="chance"):
                    raise solver.SolverError("master returned a schedule its own "
                                             "cover cut should exclude")
                self.counters["chance_cuts"] += 1
                self.history.append({"iter": self.iterations, "lb": self.lb,
                                     "ub": self.ub,
                                     "event": f"cover cut (P={pv:.4f})"})
                log.info("iter %d: chance-infeasible schedule (P=%.4f), cover cut",
                         self.iterations, pv)
                return True
        elif self.chance_mode == "safe":
            loads = self.block.loads(ms.schedule)
            xy_cuts = chance.soc_outer_cuts(loads, cfg.alpha)
            added = sum(self.master.add_cut(
                chance.xy_cut_to_master(xy, self.block), pool="chance")
                for xy in xy_cuts)
            if added:
                self.counters["chance_cuts"] += added
                self.history.append({"iter": self.iterations, "lb": self.lb,
                                     "ub": self.ub, "event": "product-region cut"})
                return True
            # a violated point whose cuts are all duplicates is numeric noise
            # at the region boundary; accept the schedule and move on

        self.lb = max(self.lb, ms.bound)
        day_vals = _day_values(self.inst, self.scenarios, cfg, ms.schedule,
                               self.cache, self.counters)
        upper = sum(float(self.scenarios.probs[k])
                    * (self.master.first_stage_cost(ms.schedule, k)
                       + sum(day_vals[(k, t)][0]
                             for t in range(1, cfg.horizon_days + 1)))
                    for k in range(self.scenarios.size))
        if upper < self.ub:
            self.ub, self.incumbent = upper, dict(ms.schedule)

        gap = _relative_gap(self.ub, self.lb)
        self.history.append({"iter": self.iterations, "lb": self.lb,
                             "ub": self.ub, "gap": gap,
                             "solved": self.counters["solved"],
                             "aliased": self.counters["aliased"]})
        log.info("iter %d: LB %.6g UB %.6g gap %.3g (solved %d aliased %d)",
                 self.iterations, self.lb, self.ub, gap,
                 self.counters["solved"], self.counters["aliased"])
        if gap <= cfg.epsilon:
            self.status = "optimal"
            return False

        for cut in _optimality_cuts(self.master, self.inst, self.scenarios, cfg,
                                    ms.schedule, day_vals, self.day_bounds):
            if self.master.add_cut(cut, pool="opt"):
                self.counters["opt_cuts"] += 1
        return True

    def report(self) -> SolveReport:
        counters = dict(self.counters)
        counters["psi_total"] = self.cache.psi_total
        return SolveReport(status=self.status or "limit", schedule=self.incumbent,
                           objective=self.ub, bound=self.lb,
                           gap=_relative_gap(self.ub, self.lb),
                           iterations=self.iterations, counts=counters,
                           history=self.history,
                           elapsed=time.perf_counter() - self.started,
                           cut_log=self.master.cut_log())


def solve(inst: Instance, scenarios: ScenarioSet, cfg: RunConfig | None = None,
          enforce_chance: bool = True, cache: StatusCache | None = None,
          day_bounds: dict | None = None) -> SolveReport:
    """Run the decomposition to the configured relative optimality gap."""
    cfg = cfg or inst.cfg
    run = DecompositionRun(inst, scenarios, cfg, enforce_chance, cache, day_bounds)
    while True:
        if run.iterations >= cfg.iteration_limit:
            run.status = "limit"
            break
        if cfg.time_limit is not None \
                and time.perf_counter() - run.started > cfg.time_limit:
            run.status = "limit"
            break
        if not run.iterate_once():
            break
    return run.report()
