"""Degradation signals, drift posteriors, and inverse-Gaussian remaining lifetimes.

A component's health signal follows a linear Brownian-drift process.  Observed
increments update the drift through its Normal posterior; the residual life
until the signal first crosses the failure threshold is then inverse Gaussian.
Failure scenarios for the stochastic program are day-bucket samples from those
distributions.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .caseio import DegradationPriors

__all__ = [
    "DegradationPriors", "SignalPath", "SignalObservations", "ComponentRLD",
    "ScenarioSet", "simulate_signal", "observe", "posterior_drift", "rld",
    "ig_cdf", "failure_prob_within", "bucket_probs", "select_subset",
    "sample_scenarios", "estimate_priors",
    "SingularPosteriorError", "NonDegradingError",
]


class SingularPosteriorError(ZeroDivisionError):
    """Degenerate priors make the drift-posterior denominator vanish."""


class NonDegradingError(ValueError):
    """Posterior drift is nonpositive; no finite lifetime distribution exists."""


@dataclass(frozen=True)
class SignalPath:
    """A simulated degradation signal on the grid t = 0, dt, 2dt, ...

    ``values[i]`` is the signal level at time ``i*dt``; ``values[0]`` is the
    initial amplitude.  ``failure_step`` is the first grid index at which the
    level reaches the threshold.
    """
    values: np.ndarray
    failure_step: int
    dt: float = 1.0

    @property
    def failure_time(self) -> float:
        return self.failure_step * self.dt

    @property
    def increments(self) -> np.ndarray:
        """First entry is the amplitude reading, the rest are step increments."""
        out = np.empty_like(self.values)
        out[0] = self.values[0]
        out[1:] = np.diff(self.values)
        return out


@dataclass(frozen=True)
class SignalObservations:
    """Signal increments recorded from observation time t_first through t_obs.

    ``increments[0]`` is the cumulative level at ``t_first`` (the observer's
    first reading); subsequent entries are the unit-time increments, so the
    running sum always equals the current signal level.
    """
    increments: tuple[float, ...]
    t_first: int
    t_obs: int

    def __post_init__(self):
        if not (self.t_obs >= self.t_first >= 1):
            raise ValueError("need t_obs >= t_first >= 1")
        if len(self.increments) != self.t_obs - self.t_first + 1:
            raise ValueError("increment count does not match the observation window")

    @property
    def first(self) -> float:
        return self.increments[0]

    @property
    def total(self) -> float:
        return float(sum(self.increments))


@dataclass(frozen=True)
class ComponentRLD:
    """Inverse-Gaussian remaining-lifetime distribution of one component."""
    shape_mu: float      # (threshold - observed level) / posterior drift
    scale_lambda: float  # (threshold - observed level)^2 / sigma^2
    t_obs: int = 0       # absolute observation time the clock starts from

    def __post_init__(self):
        if self.shape_mu <= 0 or self.scale_lambda <= 0:
            raise ValueError("inverse-Gaussian parameters must be positive")

    def cdf(self, t: float) -> float:
        return ig_cdf(t, self.shape_mu, self.scale_lambda)

    def to_json(self) -> str:
        return json.dumps({"shape_mu": self.shape_mu,
                           "scale_lambda": self.scale_lambda, "t_obs": self.t_obs})


def simulate_signal(priors: DegradationPriors, dt: float = 1.0,
                    seed: int | np.random.Generator | None = None,
                    max_steps: int = 1_000_000) -> SignalPath:
    """Draw one degradation path and stop at first passage of the threshold.

    Amplitude and drift are drawn from the priors; the Brownian term uses
    Euler steps of width ``dt``.  Raises if the path has not crossed within
    ``max_steps`` (possible only for nonpositive sampled drift).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    amplitude = rng.normal(priors.mu0, priors.kappa0)
    drift = rng.normal(priors.mu1, priors.kappa1)
    values = [amplitude]
    level = amplitude
    step = 0
    while level < priors.threshold:
        step += 1
        if step > max_steps:
            raise RuntimeError("degradation path did not cross the threshold "
                               f"within {max_steps} steps (drift {drift:.3g})")
        level += drift * dt + priors.sigma * math.sqrt(dt) * rng.standard_normal()
        values.append(level)
    return SignalPath(np.array(values), failure_step=step, dt=dt)


def observe(path: SignalPath, t_first: int, t_obs: int) -> SignalObservations:
    """Extract the observation window [t_first, t_obs] from a unit-step path."""
    if path.dt != 1.0:
        raise ValueError("observations are defined on unit-step paths")
    if t_obs >= path.failure_step:
        raise ValueError("observation window reaches past the failure time")
    incr = [float(path.values[t_first])]
    incr.extend(float(d) for d in np.diff(path.values[t_first:t_obs + 1]))
    return SignalObservations(tuple(incr), t_first, t_obs)


def posterior_drift(priors: DegradationPriors, obs: SignalObservations) -> float:
    """Posterior mean of the drift given the observed increments."""
    k0sq, k1sq, ssq = priors.kappa0 ** 2, priors.kappa1 ** 2, priors.sigma ** 2
    t1, tk = obs.t_first, obs.t_obs
    total, first = obs.total, obs.first
    num = (k1sq * total + priors.mu1 * ssq) * (k0sq + ssq * t1) \
        - k1sq * (first * k0sq + priors.mu0 * ssq * t1)
    den = (k0sq + ssq * t1) * (k1sq * tk + ssq) - k0sq * k1sq * t1
    if den == 0:
        raise SingularPosteriorError("drift posterior denominator is zero "
                                     "(degenerate priors)")
    return num / den


def rld(priors: DegradationPriors, obs: SignalObservations,
        mu_prime: float) -> ComponentRLD:
    """Remaining-lifetime distribution at the observation time."""
    residual = priors.threshold - obs.total
    if residual <= 0:
        raise ValueError("signal already at or past the failure threshold")
    if mu_prime <= 0:
        raise NonDegradingError(f"posterior drift {mu_prime:.4g} is not positive")
    if priors.sigma <= 0:
        raise ValueError("remaining lifetime needs a positive signal sd")
    return ComponentRLD(shape_mu=residual / mu_prime,
                        scale_lambda=residual ** 2 / priors.sigma ** 2,
                        t_obs=obs.t_obs)


def ig_cdf(x: float, mu: float, lam: float) -> float:
    """Inverse-Gaussian CDF via the closed form in the normal CDF.

    The second term is evaluated in log space: exp(2*lam/mu) overflows long
    before the product with the tiny normal tail does.
    """
    if x <= 0:
        return 0.0
    root = math.sqrt(lam / x)
    a = root * (x / mu - 1.0)
    b = -root * (x / mu + 1.0)
    term1 = norm.cdf(a)
    log_term2 = 2.0 * lam / mu + norm.logcdf(b)
    value = term1 + (math.exp(log_term2) if log_term2 > -745 else 0.0)
    return min(1.0, max(0.0, float(value)))


def failure_prob_within(dist: ComponentRLD, horizon_days: float) -> float:
    """Probability the component fails within the next ``horizon_days``."""
    if horizon_days <= 0:
        return 0.0
    return dist.cdf(horizon_days)


def bucket_probs(dist: ComponentRLD, horizon_days: int) -> np.ndarray:
    """Daily failure-time buckets: P(day 1), ..., P(day T), P(no failure).

    The entries always sum to one exactly by construction.
    """
    cdf = np.array([dist.cdf(t) for t in range(horizon_days + 1)])
    probs = np.empty(horizon_days + 1)
    probs[:horizon_days] = np.maximum(np.diff(cdf), 0.0)
    probs[horizon_days] = max(0.0, 1.0 - cdf[horizon_days])
    return probs / probs.sum()


def select_subset(pfail: dict[str, float], kinds: dict[str, str],
                  threshold_gen: float, threshold_line: float) -> tuple[list[str], list[str]]:
    """Split components into the maintenance-candidate set and the rest.

    A component is a candidate when its within-horizon failure probability
    reaches its class threshold.  The two lists partition the input.
    """
    hprime, hsecond = [], []
    for comp, p in pfail.items():
        bar = threshold_gen if kinds[comp] == "gen" else threshold_line
        (hprime if p >= bar else hsecond).append(comp)
    return hprime, hsecond


@dataclass(frozen=True)
class ScenarioSet:
    """Sampled failure days per component; the last slot T+1 means no failure."""
    component_ids: tuple[str, ...]
    failure_times: np.ndarray  # shape (N, |components|), values in 1..T+1
    probs: np.ndarray          # scenario probabilities, sum to 1
    horizon_days: int

    def __post_init__(self):
        n, m = self.failure_times.shape
        if m != len(self.component_ids) or len(self.probs) != n:
            raise ValueError("scenario set dimensions are inconsistent")
        if abs(float(self.probs.sum()) - 1.0) > 1e-9:
            raise ValueError("scenario probabilities must sum to 1")

    @property
    def size(self) -> int:
        return self.failure_times.shape[0]

    def xi(self, k: int) -> dict[str, int]:
        """Failure-time map for scenario index k (0-based)."""
        row = self.failure_times[k]
        return {comp: int(row[j]) for j, comp in enumerate(self.component_ids)}

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write("component,k,xi\n")
        for k in range(self.size):
            for j, comp in enumerate(self.component_ids):
                out.write(f"{comp},{k + 1},{int(self.failure_times[k, j])}\n")
        return out.getvalue()

    @classmethod
    def from_csv(cls, text: str, horizon_days: int) -> "ScenarioSet":
        cells: dict[tuple[str, int], int] = {}
        comps: list[str] = []
        for lineno, line in enumerate(io.StringIO(text), start=1):
            line = line.strip()
            if not line or (lineno == 1 and line.lower().startswith("component")):
                continue
            try:
                comp, k, xi_val = line.split(",")
                k, xi_val = int(k), int(xi_val)
            except ValueError as exc:
                raise ValueError(f"scenario row {lineno}: expected "
                                 f"component,k,xi ({exc})") from exc
            if not (1 <= xi_val <= horizon_days + 1):
                raise ValueError(f"scenario row {lineno}: failure time {xi_val} "
                                 f"outside 1..{horizon_days + 1}")
            if comp not in comps:
                comps.append(comp)
            if (comp, k) in cells:
                raise ValueError(f"scenario row {lineno}: duplicate ({comp}, {k})")
            cells[(comp, k)] = xi_val
        if not cells:
            raise ValueError("scenario CSV has no data rows")
        n = max(k for _, k in cells)
        times = np.empty((n, len(comps)), dtype=int)
        for j, comp in enumerate(comps):
            for k in range(1, n + 1):
                if (comp, k) not in cells:
                    raise ValueError(f"scenario CSV is missing ({comp}, {k})")
                times[k - 1, j] = cells[(comp, k)]
        return cls(tuple(comps), times, np.full(n, 1.0 / n), horizon_days)


def sample_scenarios(rlds: dict[str, ComponentRLD], n: int, horizon_days: int,
                     seed: int | np.random.Generator | None = None) -> ScenarioSet:
    """Sample independent day-bucket failure times for each component."""
    if n < 1:
        raise ValueError("need at least one scenario")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    comps = tuple(rlds)
    times = np.empty((n, len(comps)), dtype=int)
    days = np.arange(1, horizon_days + 2)  # 1..T plus the no-failure slot T+1
    for j, comp in enumerate(comps):
        probs = bucket_probs(rlds[comp], horizon_days)
        times[:, j] = rng.choice(days, size=n, p=probs)
    return ScenarioSet(comps, times, np.full(n, 1.0 / n), horizon_days)


def estimate_priors(corpus: list[SignalPath]) -> tuple[float, float]:
    """Point estimates of the amplitude and drift prior means from failed signals.

    The amplitude estimate is the mean first reading; the drift estimate
    averages (total rise after the first reading) / (steps to failure).
    """
    if not corpus:
        raise ValueError("empty signal corpus")
    firsts, drifts = [], []
    for path in corpus:
        if path.failure_step < 1:
            raise ValueError("corpus signal failed before its first increment")
        incr = path.increments
        first = float(incr[0])
        total = float(path.values[path.failure_step])
        firsts.append(first)
        drifts.append((total - first) / path.failure_step)
    return float(np.mean(firsts)), float(np.mean(drifts))
