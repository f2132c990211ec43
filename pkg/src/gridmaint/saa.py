"""Sample-average-approximation driver and schedule evaluation.

Training samples cover only the maintenance candidates; evaluation samples
cover every component, so a candidate schedule is judged against failures the
planner never optimized for.  Replicate optima estimate the lower statistical
bound, the best candidate's out-of-sample cost the upper one, and the two
confidence intervals bracket the true optimum.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import norm, t as student_t

from . import decomp, solver, ucmodel
from .caseio import RunConfig
from .degrade import ScenarioSet
from .instance import Instance, no_failure_scenarios, test_scenarios, \
    training_scenarios

log = logging.getLogger(__name__)

__all__ = ["EvalReport", "SAAReport", "evaluate_schedule",
           "deterministic_baseline", "run_saa", "cost_improvement",
           "upper_bound_stats", "lower_bound_stats"]


@dataclass
class EvalReport:
    n_scenarios: int
    avg_failures: dict[str, float]   # gen_prime, line_prime, second
    violation_freq: float
    gm: float                        # expected generator maintenance cost
    tlm: float                       # expected line maintenance cost
    ops: float                       # expected operational cost
    per_scenario_total: np.ndarray = field(repr=False, default=None)

    @property
    def total(self) -> float:
        return self.gm + self.tlm + self.ops


def evaluate_schedule(inst: Instance, schedule: dict[str, int],
                      scens: ScenarioSet, cache: decomp.StatusCache | None = None,
                      cfg: RunConfig | None = None) -> EvalReport:
    """Out-of-sample cost and failure statistics of a fixed schedule.

    Corrective-maintenance counts are taken per class over every component
    (unscheduled ones count as failing uncovered); the joint constraint is
    violated when either class count exceeds its threshold.  Recourse costs
    reuse the status cache across scenarios.
    """
    cfg = cfg or inst.cfg
    missing = set(inst.hprime) - set(schedule)
    if missing:
        raise ValueError(f"schedule lacks periods for {sorted(missing)}")
    unknown = set(schedule) - set(inst.components)
    if unknown:
        raise ValueError(f"schedule names unknown components {sorted(unknown)}")
    for comp, period in schedule.items():
        if not (1 <= period <= cfg.tbar):
            raise ValueError(f"{comp}: period {period} outside 1..{cfg.tbar}")
    cache = cache if cache is not None else decomp.StatusCache()
    kinds = inst.kinds
    comps = inst.all_components
    horizon = cfg.horizon_days

    n = scens.size
    fail_gp = fail_lp = fail_second = 0
    violations = 0
    gm = np.zeros(n)
    tlm = np.zeros(n)
    ops = np.zeros(n)
    cost_of = {comp: inst.maint_cost(comp) for comp in inst.hprime}

    for k in range(n):
        xi = scens.xi(k)
        corr_gen = corr_line = 0
        for comp in comps:
            xi_c = xi.get(comp, cfg.tbar)
            if xi_c > horizon:
                continue
            covered = comp in schedule and schedule[comp] < xi_c
            if covered:
                continue
            if kinds[comp] == "gen":
                corr_gen += 1
            else:
                corr_line += 1
            if comp in inst.hprime:
                if kinds[comp] == "gen":
                    fail_gp += 1
                else:
                    fail_lp += 1
            else:
                fail_second += 1
        if corr_gen > cfg.rho_gen or corr_line > cfg.rho_line:
            violations += 1

        for comp in inst.hprime:
            pred, corr = cost_of[comp]
            coeffs = ucmodel.maintenance_cost_coeffs(pred, corr,
                                                     xi.get(comp, cfg.tbar), cfg.tbar)
            cost = float(coeffs[schedule[comp] - 1])
            if kinds[comp] == "gen":
                gm[k] += cost
            else:
                tlm[k] += cost

        for day in range(1, horizon + 1):
            status = ucmodel.status_vector(schedule, xi, day, cfg, comps, kinds)
            hit = cache.lookup(day, status)
            if hit is None:
                down = ucmodel.unavailable_components(comps, status)
                model = ucmodel.build_subproblem(
                    inst.net, inst.demand.day(day), down, cfg,
                    omit_bounds=inst.omit_bounds_for(day, down),
                    label=f"eval_day{day}")
                outcome = solver.solve(model.spec, tolerance=cfg.subproblem_gap)
                if outcome.status != "optimal":
                    raise solver.SolverError(f"evaluation day {day} ended "
                                             f"{outcome.status}")
                hit = (float(outcome.objective), float(outcome.bound))
                cache.store(day, status, *hit)
            else:
                cache.aliased += 1
            ops[k] += hit[0]

    total = gm + tlm + ops
    return EvalReport(
        n_scenarios=n,
        avg_failures={"gen_prime": fail_gp / n, "line_prime": fail_lp / n,
                      "second": fail_second / n},
        violation_freq=violations / n,
        gm=float(gm.mean()), tlm=float(tlm.mean()), ops=float(ops.mean()),
        per_scenario_total=total)


def deterministic_baseline(inst: Instance,
                           cfg: RunConfig | None = None) -> decomp.SolveReport:
    """Plan as if nothing ever fails: one no-failure scenario, no chance rows."""
    cfg = cfg or inst.cfg
    return decomp.solve(inst, no_failure_scenarios(inst), cfg,
                        enforce_chance=False)


def cost_improvement(dm_total: float, sp_total: float) -> dict[str, float]:
    """Savings of the stochastic plan, under both denominator conventions."""
    out = {}
    out["vs_deterministic"] = 100.0 * (dm_total - sp_total) / dm_total \
        if dm_total else 0.0
    out["vs_stochastic"] = 100.0 * (dm_total - sp_total) / sp_total \
        if sp_total else 0.0
    return out


def upper_bound_stats(costs: np.ndarray,
                      significance: float) -> tuple[float, float, tuple[float, float]]:
    """Mean, standard error, and normal-quantile CI of the evaluation costs."""
    costs = np.asarray(costs, dtype=float)
    n = len(costs)
    mu = float(costs.mean())
    sigma_sq = float(np.sum((costs - mu) ** 2)) / (n * (n - 1)) if n > 1 else 0.0
    sigma = float(np.sqrt(sigma_sq))
    z_q = float(norm.ppf(1.0 - significance / 2.0))
    return mu, sigma, (mu - z_q * sigma, mu + z_q * sigma)


def lower_bound_stats(replicate_values: np.ndarray,
                      significance: float) -> tuple[float, float, tuple[float, float]]:
    """Mean, standard error, and t-quantile CI of the replicate optima."""
    zs = np.asarray(replicate_values, dtype=float)
    m = len(zs)
    mu = float(zs.mean())
    sigma_sq = float(np.sum((zs - mu) ** 2)) / (m * (m - 1)) if m > 1 else 0.0
    sigma = float(np.sqrt(sigma_sq))
    t_q = float(student_t.ppf(1.0 - significance / 2.0, df=m - 1))
    return mu, sigma, (mu - t_q * sigma, mu + t_q * sigma)


@dataclass
class SAAReport:
    replicates: list[dict]
    best_index: int
    best_schedule: dict[str, int]
    mu_upper: float
    sigma_upper: float
    ci_upper: tuple[float, float]
    mu_lower: float
    sigma_lower: float
    ci_lower: tuple[float, float]
    ci_overall: tuple[float, float]
    gap_pct: float
    gap_convention: str = "(ci_upper_hi - ci_lower_lo) / ci_upper_hi"
    significance: float = 0.05
    elapsed: float = 0.0


def run_saa(inst: Instance, cfg: RunConfig | None = None,
            seed: int | None = None) -> SAAReport:
    """Replicated training plus common out-of-sample evaluation with CIs."""
    cfg = cfg or inst.cfg
    if cfg.saa_m < 2:
        raise ValueError("need at least two SAA replicates")
    if cfg.saa_n < 1 or cfg.saa_nprime < cfg.saa_n:
        raise ValueError("need N >= 1 and N' >= N")
    started = time.perf_counter()
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    streams = rng.spawn(cfg.saa_m + 1)
    test_set = test_scenarios(inst, cfg.saa_nprime, streams[0])

    solve_cfg = replace(cfg, threads=1) if cfg.threads > 1 else cfg

    def one_replicate(i: int) -> dict:
        train = training_scenarios(inst, cfg.saa_n, streams[i + 1])
        report = decomp.solve(inst, train, solve_cfg)
        return {"index": i, "status": report.status, "z": report.objective,
                "schedule": report.schedule, "iterations": report.iterations}

    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            replicates = list(pool.map(one_replicate, range(cfg.saa_m)))
    else:
        replicates = [one_replicate(i) for i in range(cfg.saa_m)]

    usable = [r for r in replicates if r["status"] == "optimal"]
    for r in replicates:
        if r["status"] != "optimal":
            log.warning("SAA replicate %d ended %s; excluded", r["index"], r["status"])
    if len(usable) < 2:
        raise solver.SolverError("fewer than two SAA replicates solved to optimality")

    eval_cache = decomp.StatusCache()
    for r in usable:
        ev = evaluate_schedule(inst, r["schedule"], test_set, eval_cache, cfg)
        r["eval_total"] = float(ev.per_scenario_total.mean())
        r["eval"] = ev

    best = min(usable, key=lambda r: r["eval_total"])
    mu_u, sigma_u, ci_u = upper_bound_stats(best["eval"].per_scenario_total,
                                            cfg.significance)
    mu_l, sigma_l, ci_l = lower_bound_stats([r["z"] for r in usable],
                                            cfg.significance)
    ci_overall = (ci_l[0], ci_u[1])
    gap = 0.0 if ci_u[1] == 0 else 100.0 * (ci_u[1] - ci_l[0]) / ci_u[1]

    return SAAReport(replicates=replicates, best_index=best["index"],
                     best_schedule=best["schedule"], mu_upper=mu_u,
                     sigma_upper=sigma_u, ci_upper=ci_u, mu_lower=mu_l,
                     sigma_lower=sigma_l, ci_lower=ci_l, ci_overall=ci_overall,
                     gap_pct=gap, significance=cfg.significance,
                     elapsed=time.perf_counter() - started)
