"""Feasible-set machinery for the joint chance constraint.

Exact mode separates lazily: an incumbent schedule whose oracle probability
falls below the target spawns an extended-cover inequality, which by the
monotonicity of the oracle also bans every later-shifted variant of that
schedule.  Safe mode builds the conservative two-block approximation whose
only nonlinearity is the bivariate product of the class reliability levels;
that product region is a rotated cone, handled either by a conic backend or
by tangent outer-approximation cuts inside the master loop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .pboracle import SuccessProbTable, joint_oracle

__all__ = ["LinearCut", "Cover", "separate", "extend_cover", "cover_cut",
           "SafeApproxBlock", "safe_block", "soc_outer_cuts", "XYCut",
           "xy_cut_to_master"]


@dataclass(frozen=True)
class LinearCut:
    """Sparse inequality over schedule variables v and recourse variables theta.

    ``v_coeffs`` maps (component, period) to a coefficient; ``theta_coeffs``
    maps a theta key (scenario index, or (scenario, period) pair) to one.
    """
    v_coeffs: tuple[tuple[tuple[str, int], float], ...]
    rhs: float
    sense: str = "<="
    theta_coeffs: tuple[tuple[object, float], ...] = ()
    name: str = ""

    def __post_init__(self):
        if self.sense not in ("<=", ">="):
            raise ValueError(f"bad sense {self.sense!r}")
        if not all(math.isfinite(c) for _, c in self.v_coeffs) or not math.isfinite(self.rhs):
            raise ValueError("cut has non-finite coefficients")

    @staticmethod
    def make(v_coeffs: dict, rhs: float, sense: str = "<=",
             theta_coeffs: dict | None = None, name: str = "") -> "LinearCut":
        vv = tuple(sorted(v_coeffs.items()))
        tt = tuple(sorted((theta_coeffs or {}).items(), key=repr))
        return LinearCut(vv, rhs, sense, tt, name)

    def key(self) -> tuple:
        """Canonical identity for cut-pool deduplication."""
        return (self.sense, round(self.rhs, 12), self.v_coeffs, self.theta_coeffs)

    def violated_by(self, v_values: dict, theta_values: dict | None = None,
                    tol: float = 1e-9) -> bool:
        lhs = sum(c * v_values.get(idx, 0.0) for idx, c in self.v_coeffs)
        lhs += sum(c * (theta_values or {}).get(key, 0.0) for key, c in self.theta_coeffs)
        return lhs > self.rhs + tol if self.sense == "<=" else lhs < self.rhs - tol

    def __str__(self):
        terms = [f"{c:+g} v[{h},{t}]" for (h, t), c in self.v_coeffs]
        terms += [f"{c:+g} theta[{key}]" for key, c in self.theta_coeffs]
        return f"{self.name or 'cut'}: {' '.join(terms)} {self.sense} {self.rhs:g}"


# A cover is a full schedule of the maintenance candidates whose oracle value
# misses the reliability target; we keep it as the plain period map.
Cover = dict


def extend_cover(cover: dict[str, int], tbar: int) -> list[tuple[str, int]]:
    """All (component, period) pairs at or after each covered period."""
    pairs = []
    for comp, t_h in sorted(cover.items()):
        if not (1 <= t_h <= tbar):
            raise ValueError(f"{comp}: period {t_h} outside 1..{tbar}")
        pairs.extend((comp, t) for t in range(t_h, tbar + 1))
    return pairs


def cover_cut(index_set: list[tuple[str, int]], n_candidates: int,
              name: str = "cover") -> LinearCut:
    """sum of v over the index set <= |candidates| - 1."""
    if not index_set:
        raise ValueError("empty cover index set")
    return LinearCut.make({pair: 1.0 for pair in index_set},
                          rhs=float(n_candidates - 1), sense="<=", name=name)


def separate(schedule: dict[str, int], table: SuccessProbTable, rho_gen: int,
             rho_line: int, alpha: float) -> tuple[bool, LinearCut | None, float]:
    """Oracle check of a candidate schedule; emits an extended-cover cut on failure.

    Returns (feasible, cut, oracle value).  Feasibility is inclusive at the
    target 1 - alpha.
    """
    pv = joint_oracle(schedule, table, rho_gen, rho_line)
    if pv >= 1.0 - alpha:
        return True, None, pv
    pairs = extend_cover(schedule, table.horizon_days + 1)
    return False, cover_cut(pairs, len(schedule)), pv


# ---------------------------------------------------------------------------
# Safe approximation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SafeApproxBlock:
    """Linear load rows plus the reliability-product requirement.

    The class load x (resp. y) is an affine function of the schedule:
    x = (sum of expected corrective indicators over generators) / rho_gen.
    Schedules are safe-feasible when x, y <= 1 and (1-x)(1-y) >= 1 - alpha.
    """
    gen_coeffs: tuple[tuple[tuple[str, int], float], ...]
    line_coeffs: tuple[tuple[tuple[str, int], float], ...]
    gen_const: float   # contribution of unscheduled (non-candidate) generators
    line_const: float
    rho_gen: int
    rho_line: int
    alpha: float

    def loads(self, schedule: dict[str, int]) -> tuple[float, float]:
        gen = dict(self.gen_coeffs)
        line = dict(self.line_coeffs)
        x = self.gen_const
        y = self.line_const
        for comp, t in schedule.items():
            x += gen.get((comp, t), 0.0)
            y += line.get((comp, t), 0.0)
        return x / self.rho_gen, y / self.rho_line

    def accepts(self, schedule: dict[str, int]) -> bool:
        """Exact bivariate product handling of the approximation."""
        x, y = self.loads(schedule)
        return x <= 1.0 and y <= 1.0 and (1.0 - x) * (1.0 - y) >= 1.0 - self.alpha


def safe_block(table: SuccessProbTable, rho_gen: int, rho_line: int,
               alpha: float) -> SafeApproxBlock:
    """Assemble the conservative block from the success-probability table."""
    coeffs = {"gen": {}, "line": {}}
    consts = {"gen": 0.0, "line": 0.0}
    tbar = table.horizon_days + 1
    for comp in table.q:
        kind = table.kinds[comp]
        if comp in table.schedulable:
            for t in range(1, tbar + 1):
                coeffs[kind][(comp, t)] = table.lookup(comp, t)
        else:
            consts[kind] += table.lookup(comp, table.horizon_days)
    return SafeApproxBlock(tuple(sorted(coeffs["gen"].items())),
                           tuple(sorted(coeffs["line"].items())),
                           consts["gen"], consts["line"], rho_gen, rho_line, alpha)


@dataclass(frozen=True)
class XYCut:
    """cx * x + cy * y <= rhs in the class-load plane."""
    cx: float
    cy: float
    rhs: float


def soc_outer_cuts(point: tuple[float, float], alpha: float) -> list[XYCut]:
    """Tangent cuts separating a point from {(1-x)(1-y) >= 1-alpha, x,y <= 1}.

    The tangent is taken at the radial projection of the point onto the
    boundary hyperbola; by AM-GM it is valid for the whole region.  Points
    already inside produce no cut.
    """
    if alpha >= 1.0:
        raise ValueError("alpha >= 1 makes the chance constraint void")
    x, y = point
    target = 1.0 - alpha
    a, b = 1.0 - x, 1.0 - y
    cuts: list[XYCut] = []
    if a <= 0.0:
        cuts.append(XYCut(1.0, 0.0, alpha))  # x <= alpha, from b <= 1
    if b <= 0.0:
        cuts.append(XYCut(0.0, 1.0, alpha))
    if cuts:
        return cuts
    if a * b >= target:
        return []
    scale = math.sqrt(target / (a * b))
    a0, b0 = scale * a, scale * b
    return [XYCut(b0, a0, a0 + b0 - 2.0 * target)]


def xy_cut_to_master(cut: XYCut, block: SafeApproxBlock, name: str = "soc") -> LinearCut:
    """Substitute the affine load definitions into a class-load-plane cut."""
    v_coeffs: dict[tuple[str, int], float] = {}
    for pair, q in block.gen_coeffs:
        if cut.cx:
            v_coeffs[pair] = v_coeffs.get(pair, 0.0) + cut.cx * q / block.rho_gen
    for pair, q in block.line_coeffs:
        if cut.cy:
            v_coeffs[pair] = v_coeffs.get(pair, 0.0) + cut.cy * q / block.rho_line
    rhs = cut.rhs - cut.cx * block.gen_const / block.rho_gen \
        - cut.cy * block.line_const / block.rho_line
    return LinearCut.make(v_coeffs, rhs, "<=", name=name)
