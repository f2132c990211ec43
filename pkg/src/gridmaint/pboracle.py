"""Exact Poisson-Binomial machinery and the joint chance-probability oracle.

The number of components of one class that end up in corrective maintenance is
a sum of independent, non-identical Bernoulli indicators, i.e. Poisson
Binomial.  The PMF is computed by exact sequential convolution; with component
counts in the hundreds this is both faster and safer than transform or
normal-approximation routes, and the oracle gates feasibility so approximation
error is unacceptable.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .degrade import ComponentRLD

__all__ = ["pb_pmf", "pb_cdf", "BernoulliProfile", "SuccessProbTable",
           "success_probs", "joint_oracle", "ScheduleError"]


class ScheduleError(ValueError):
    """Malformed maintenance schedule (not exactly one period per component)."""


@dataclass(frozen=True)
class BernoulliProfile:
    """Success probabilities of one component class, with provenance."""
    probs: tuple[float, ...]
    components: tuple[str, ...] = ()

    def __post_init__(self):
        if any(not (0.0 <= p <= 1.0) for p in self.probs):
            raise ValueError("success probabilities must lie in [0, 1]")
        if self.components and len(self.components) != len(self.probs):
            raise ValueError("provenance length mismatch")


def pb_pmf(probs) -> np.ndarray:
    """Exact PMF of the sum of independent Bernoulli(p_i) variables.

    Sequential convolution: after processing i probabilities the vector holds
    the PMF of the partial sum, so the result has length n+1 and sums to 1 up
    to rounding.
    """
    if isinstance(probs, BernoulliProfile):
        probs = probs.probs
    pmf = np.array([1.0])
    for p in probs:
        nxt = np.zeros(len(pmf) + 1)
        nxt[:-1] = pmf * (1.0 - p)
        nxt[1:] += pmf * p
        pmf = nxt
    return pmf


def pb_cdf(probs, k: int) -> float:
    """P(sum <= k) for the Poisson-Binomial sum; exact prefix of the PMF."""
    if isinstance(probs, BernoulliProfile):
        probs = probs.probs
    n = len(probs)
    if k < 0:
        return 0.0
    if k >= n:
        return 1.0
    return float(pb_pmf(probs)[: k + 1].sum())


@dataclass(frozen=True)
class SuccessProbTable:
    """Per component: P(failure time <= m) for each maintenance period m.

    ``q[comp]`` has one entry per period 1..T; looking up the extended period
    T+1 (or any component without a schedule) falls back to P(xi <= T), which
    is the corrective-maintenance probability of an unscheduled component.
    """
    q: dict[str, np.ndarray]
    kinds: dict[str, str]          # comp -> "gen" | "line"
    schedulable: frozenset[str]    # the maintenance-candidate components
    horizon_days: int

    def __post_init__(self):
        for comp, arr in self.q.items():
            if len(arr) != self.horizon_days:
                raise ValueError(f"{comp}: table row must have |T| entries")
            if np.any(arr < -1e-12) or np.any(arr > 1.0 + 1e-12):
                raise ValueError(f"{comp}: probabilities outside [0, 1]")
            if np.any(np.diff(arr) < -1e-12):
                raise ValueError(f"{comp}: P(xi <= m) must be nondecreasing in m")

    @classmethod
    def from_rlds(cls, rlds: dict[str, ComponentRLD | None], kinds: dict[str, str],
                  schedulable, horizon_days: int) -> "SuccessProbTable":
        q = {}
        for comp, dist in rlds.items():
            if dist is None:  # non-degrading component: never fails in-horizon
                q[comp] = np.zeros(horizon_days)
            else:
                q[comp] = np.array([dist.cdf(m) for m in range(1, horizon_days + 1)])
        return cls(q, dict(kinds), frozenset(schedulable), horizon_days)

    def lookup(self, comp: str, period: int) -> float:
        """Success probability for maintenance at ``period`` (clamped to T)."""
        m = min(period, self.horizon_days)
        if m < 1:
            raise ValueError(f"period {period} out of range")
        return float(self.q[comp][m - 1])

    def components(self, kind: str) -> list[str]:
        return [c for c in self.q if self.kinds[c] == kind]

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write("component,kind,period,prob\n")
        for comp, arr in self.q.items():
            for m, p in enumerate(arr, start=1):
                out.write(f"{comp},{self.kinds[comp]},{m},{p:.12g}\n")
        return out.getvalue()


def _check_schedule(schedule: dict[str, int], table: SuccessProbTable) -> None:
    missing = table.schedulable - set(schedule)
    if missing:
        raise ScheduleError(f"schedule lacks a period for {sorted(missing)}")
    tbar = table.horizon_days + 1
    for comp, period in schedule.items():
        if comp not in table.schedulable:
            raise ScheduleError(f"{comp} is not a maintenance candidate")
        if not (1 <= period <= tbar):
            raise ScheduleError(f"{comp}: period {period} outside 1..{tbar}")


def success_probs(schedule: dict[str, int],
                  table: SuccessProbTable) -> tuple[BernoulliProfile, BernoulliProfile]:
    """Bernoulli profiles (generators, lines) induced by a maintenance schedule.

    Scheduled components succeed (fail before their maintenance) with
    P(xi <= scheduled period); everything else with P(xi <= T).
    """
    _check_schedule(schedule, table)
    out = {}
    for kind in ("gen", "line"):
        comps = table.components(kind)
        probs = []
        for comp in comps:
            period = schedule.get(comp, table.horizon_days)
            probs.append(table.lookup(comp, period))
        out[kind] = BernoulliProfile(tuple(probs), tuple(comps))
    return out["gen"], out["line"]


def joint_oracle(schedule: dict[str, int], table: SuccessProbTable,
                 rho_gen: int, rho_line: int) -> float:
    """P(v): probability that corrective-maintenance counts stay within both
    class thresholds, using independence of the two Poisson-Binomial sums."""
    gens, lines = success_probs(schedule, table)
    return pb_cdf(gens, rho_gen) * pb_cdf(lines, rho_line)
