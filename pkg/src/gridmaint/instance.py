"""Planning-instance assembly: network, demand, and degradation-driven data.

Maps every generator and transmission line to a simulated condition history,
its drift posterior and remaining-lifetime distribution, a within-horizon
failure probability, and the resulting maintenance-candidate split.  All
downstream modules work off this object.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import degrade
from .caseio import DemandGrid, Network, RunConfig
from .pboracle import SuccessProbTable
from .preflow import RedundancyReport

log = logging.getLogger(__name__)

__all__ = ["Component", "Instance", "build_instance", "training_scenarios",
           "test_scenarios", "no_failure_scenarios"]


@dataclass(frozen=True)
class Component:
    id: str
    kind: str                       # "gen" | "line"
    rld: degrade.ComponentRLD | None  # None: non-degrading, never fails here
    p_fail: float


@dataclass
class Instance:
    net: Network
    demand: DemandGrid
    cfg: RunConfig
    components: dict[str, Component]
    hprime: tuple[str, ...]
    hsecond: tuple[str, ...]
    table: SuccessProbTable
    preflow_report: RedundancyReport | None = None

    @property
    def kinds(self) -> dict[str, str]:
        return {c.id: c.kind for c in self.components.values()}

    @property
    def all_components(self) -> tuple[str, ...]:
        return tuple(self.components)

    def maint_cost(self, comp: str) -> tuple[float, float]:
        kind = self.components[comp].kind
        if kind == "gen":
            gen = next(g for g in self.net.generators if g.id == comp)
            return gen.maint_cost_pred, gen.maint_cost_corr
        line = next(ln for ln in self.net.lines if ln.id == comp)
        return line.maint_cost_pred, line.maint_cost_corr

    def omit_bounds_for(self, day: int, unavailable: frozenset[str]) -> frozenset:
        """Preflow deletions valid for this availability pattern.

        The flow relaxation assumes non-candidate lines stay in service, so
        the deletions are withheld whenever one of them is out (possible only
        in evaluation over the full component set).
        """
        if self.preflow_report is None:
            return frozenset()
        kinds = self.kinds
        for comp in unavailable:
            if kinds.get(comp) == "line" and comp not in self.hprime:
                return frozenset()
        return self.preflow_report.omitted_for_day(day, self.cfg.subperiods)


def _observe_component(priors, rng) -> degrade.ComponentRLD | None:
    """Simulate one component's condition history and fit its lifetime law.

    The observation time is uniform over the window in which a typical signal
    is still short of the threshold; histories that failed before they could
    be observed are redrawn.
    """
    upper = (priors.threshold - priors.mu0) / (priors.mu1 + 3.0 * priors.kappa1)
    upper = max(1, int(math.floor(upper)))
    for _ in range(200):
        path = degrade.simulate_signal(priors, seed=rng)
        if path.failure_step <= 1:
            continue  # failed before any observation window exists
        t_obs = int(rng.integers(1, upper + 1))
        if t_obs >= path.failure_step:
            continue  # came to observe after the failure; redraw
        obs = degrade.observe(path, 1, t_obs)
        try:
            drift = degrade.posterior_drift(priors, obs)
            return degrade.rld(priors, obs, drift)
        except degrade.NonDegradingError:
            return None
    raise RuntimeError("could not draw an observable degradation history")


def build_instance(net: Network, demand: DemandGrid, cfg: RunConfig,
                   seed: int | None = None,
                   preflow_report: RedundancyReport | None = None) -> Instance:
    """Assemble an instance with per-component condition data.

    Each component gets an independent simulated signal from its class priors,
    observed at a uniformly random time while still degrading; the posterior
    drift then fixes its remaining-lifetime distribution and failure
    probability within the horizon.
    """
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    components: dict[str, Component] = {}
    kind_of = [("gen", cfg.priors_gen, [g.id for g in net.generators]),
               ("line", cfg.priors_line, [ln.id for ln in net.lines])]
    for kind, priors, ids in kind_of:
        for comp in ids:
            dist = _observe_component(priors, rng)
            if dist is None:
                log.warning("component %s has non-positive posterior drift; "
                            "treated as non-degrading", comp)
            p = degrade.failure_prob_within(dist, cfg.horizon_days) if dist else 0.0
            components[comp] = Component(comp, kind, dist, p)

    pfail = {c.id: c.p_fail for c in components.values()}
    kinds = {c.id: c.kind for c in components.values()}
    hprime, hsecond = degrade.select_subset(pfail, kinds, cfg.pfail_gen,
                                            cfg.pfail_line)
    order = list(components)  # case order: generators then lines
    hprime = tuple(c for c in order if c in set(hprime))
    hsecond = tuple(c for c in order if c in set(hsecond))
    table = SuccessProbTable.from_rlds({c.id: c.rld for c in components.values()},
                                       kinds, hprime, cfg.horizon_days)
    log.info("instance: |G'|=%d |L'|=%d of %d components",
             sum(1 for c in hprime if kinds[c] == "gen"),
             sum(1 for c in hprime if kinds[c] == "line"), len(components))
    return Instance(net, demand, cfg, components, hprime, hsecond, table,
                    preflow_report)


def _rlds_for(inst: Instance, comps) -> dict[str, degrade.ComponentRLD | None]:
    return {c: inst.components[c].rld for c in comps}


def training_scenarios(inst: Instance, n: int, seed) -> degrade.ScenarioSet:
    """Failure scenarios over the maintenance candidates only."""
    return _sample(inst, inst.hprime, n, seed)


def test_scenarios(inst: Instance, n: int, seed) -> degrade.ScenarioSet:
    """Failure scenarios over every component, for solution evaluation."""
    return _sample(inst, inst.all_components, n, seed)


def no_failure_scenarios(inst: Instance) -> degrade.ScenarioSet:
    """The single scenario a failure-blind planner sees."""
    times = np.full((1, len(inst.hprime)), inst.cfg.tbar, dtype=int)
    return degrade.ScenarioSet(inst.hprime, times, np.array([1.0]),
                               inst.cfg.horizon_days)


def _sample(inst: Instance, comps, n, seed) -> degrade.ScenarioSet:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    horizon = inst.cfg.horizon_days
    times = np.empty((n, len(comps)), dtype=int)
    days = np.arange(1, horizon + 2)
    for j, comp in enumerate(comps):
        dist = inst.components[comp].rld
        if dist is None:
            times[:, j] = horizon + 1
            continue
        probs = degrade.bucket_probs(dist, horizon)
        times[:, j] = rng.choice(days, size=n, p=probs)
    return degrade.ScenarioSet(tuple(comps), times, np.full(n, 1.0 / n), horizon)
