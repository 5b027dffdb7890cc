"""Parametric per-citizen value functions V(F) over a good's funding level.

Four families, chosen to cover every qualitative regime the contribution
game can produce:

    SQRT        a*sqrt(F)                    marginal diverges at 0
    LOG         a*log(1+F)                   marginal bounded by a at 0
    ISOELASTIC  a*F**rho, rho in (0,1)       marginal diverges at 0
    SSHAPED     a*(sigma(k*(F-m)) - sigma(-k*m))   logistic, non-concave

All families satisfy V(0) = 0. SQRT, LOG and ISOELASTIC are strictly
increasing and concave for a > 0; SSHAPED is increasing but convex below
its inflection m and concave above it. A negative weight ``a`` on the
concave families models a citizen harmed by the good (value decreasing in
F), which is what lets signed-contribution scenarios produce genuinely
negative marginal values; the concavity invariants apply to a > 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.special import expit

from .errors import NoSolutionError


class Family(str, Enum):
    SQRT = "SQRT"
    LOG = "LOG"
    ISOELASTIC = "ISOELASTIC"
    SSHAPED = "SSHAPED"


def _as_float_array(F):
    arr = np.asarray(F, dtype=float)
    if np.any(arr < 0):
        raise ValueError("funding level must be nonnegative")
    return arr


@dataclass(frozen=True)
class ValueFunction:
    family: Family
    a: float
    rho: float | None = None
    k: float | None = None
    m: float | None = None

    def __post_init__(self):
        if self.a == 0 or not math.isfinite(self.a):
            raise ValueError("weight a must be a nonzero finite real")
        if self.family is Family.ISOELASTIC:
            if self.rho is None or not (0.0 < self.rho < 1.0):
                raise ValueError(f"ISOELASTIC requires rho in (0, 1), got {self.rho!r}")
        elif self.rho is not None:
            raise ValueError("rho only applies to ISOELASTIC")
        if self.family is Family.SSHAPED:
            if self.a < 0:
                raise ValueError("SSHAPED requires a > 0")
            if self.k is None or self.k <= 0 or self.m is None or self.m <= 0:
                raise ValueError("SSHAPED requires k > 0 and m > 0")
        elif self.k is not None or self.m is not None:
            raise ValueError("k and m only apply to SSHAPED")

    @classmethod
    def sqrt(cls, a: float) -> "ValueFunction":
        return cls(Family.SQRT, a)

    @classmethod
    def log(cls, a: float) -> "ValueFunction":
        return cls(Family.LOG, a)

    @classmethod
    def isoelastic(cls, a: float, rho: float) -> "ValueFunction":
        return cls(Family.ISOELASTIC, a, rho=rho)

    @classmethod
    def sshaped(cls, a: float, k: float, m: float) -> "ValueFunction":
        return cls(Family.SSHAPED, a, k=k, m=m)

    @property
    def concave(self) -> bool:
        return self.family is not Family.SSHAPED and self.a > 0

    def value(self, F):
        """V(F); accepts a scalar or an ndarray. V(0) = 0 for every family."""
        arr = _as_float_array(F)
        fam = self.family
        if fam is Family.SQRT:
            out = self.a * np.sqrt(arr)
        elif fam is Family.LOG:
            out = self.a * np.log1p(arr)
        elif fam is Family.ISOELASTIC:
            out = self.a * arr**self.rho
        else:
            out = self.a * (expit(self.k * (arr - self.m)) - expit(-self.k * self.m))
        return out if arr.ndim else float(out)

    def marginal(self, F):
        """V'(F). Where the derivative diverges at F=0 (SQRT, ISOELASTIC)
        the result is the signed infinity sentinel rather than an error."""
        arr = _as_float_array(F)
        fam = self.family
        with np.errstate(divide="ignore"):
            if fam is Family.SQRT:
                out = np.where(arr > 0, self.a / (2.0 * np.sqrt(np.maximum(arr, 1e-300))),
                               math.copysign(math.inf, self.a))
            elif fam is Family.LOG:
                out = self.a / (1.0 + arr)
            elif fam is Family.ISOELASTIC:
                out = np.where(arr > 0,
                               self.a * self.rho * np.maximum(arr, 1e-300) ** (self.rho - 1.0),
                               math.copysign(math.inf, self.a))
            else:
                sig = expit(self.k * (arr - self.m))
                out = self.a * self.k * sig * (1.0 - sig)
        return out if arr.ndim else float(out)

    def inverse_marginal(self, target: float) -> float:
        """F >= 0 with V'(F) = target, on the decreasing branch.

        For SSHAPED only the post-inflection (decreasing) branch is
        inverted; the pre-inflection root of the same marginal value is a
        coordination question, handled by the equilibrium module's global
        search instead. Raises NoSolutionError when the target exceeds the
        attainable range.
        """
        if not (target > 0) or not math.isfinite(target):
            raise ValueError(f"target marginal must be a positive real, got {target!r}")
        if self.a < 0:
            raise NoSolutionError("marginal value is negative everywhere for a < 0")
        fam = self.family
        if fam is Family.SQRT:
            r = self.a / (2.0 * target)
            return r * r
        if fam is Family.LOG:
            if target > self.a:
                raise NoSolutionError(
                    f"marginal at 0 is {self.a}, below the requested {target}")
            return self.a / target - 1.0
        if fam is Family.ISOELASTIC:
            return (target / (self.a * self.rho)) ** (1.0 / (self.rho - 1.0))
        peak = self.a * self.k / 4.0  # logistic marginal peaks at the inflection
        if target > peak:
            raise NoSolutionError(
                f"marginal peaks at {peak} (inflection), below the requested {target}")
        sig = 0.5 * (1.0 + math.sqrt(max(0.0, 1.0 - 4.0 * target / (self.a * self.k))))
        if sig >= 1.0:
            raise NoSolutionError("target marginal too small to invert in floats")
        return self.m + math.log(sig / (1.0 - sig)) / self.k


@dataclass
class Citizen:
    """A participant: identity, per-good value functions, and a shadow
    price ``lam`` on the mechanism deficit (used in SHADOW_PRICES mode)."""

    id: str
    values: dict[str, ValueFunction] = field(default_factory=dict)
    lam: float = 0.0

    def __post_init__(self):
        if self.lam < 0 or not math.isfinite(self.lam):
            raise ValueError("lam must be a finite nonnegative real")

    def value_for(self, good_id: str) -> ValueFunction | None:
        return self.values.get(good_id)


def aggregate_marginal(citizens, good_id: str, F: float) -> float:
    """Sum of V'(F) over the citizens that value the good.

    Divergence sentinels propagate: the sum is +/-inf when one side
    diverges, and nan when +inf and -inf meet (only possible with opposed
    infinite-marginal families at F=0).
    """
    terms = [c.values[good_id].marginal(F) for c in citizens if good_id in c.values]
    finite = [t for t in terms if math.isfinite(t)]
    pos_inf = any(t == math.inf for t in terms)
    neg_inf = any(t == -math.inf for t in terms)
    if pos_inf and neg_inf:
        return math.nan
    if pos_inf:
        return math.inf
    if neg_inf:
        return -math.inf
    return math.fsum(finite)


@dataclass(frozen=True)
class ConcavityReport:
    violations: tuple[tuple[float, float, float], ...]
    triples_checked: int

    @property
    def concave_on_grid(self) -> bool:
        return not self.violations


def concavity_audit(v: ValueFunction, grid, rel_tol: float = 1e-12) -> ConcavityReport:
    """Flag consecutive grid triples where V falls below its chord.

    For each triple (F1, F2, F3) concavity requires V(F2) to sit on or
    above the chord through (F1, V1) and (F3, V3). Triples straddling an
    SSHAPED inflection can sit exactly on the chord; the relative tolerance
    keeps those from being flagged by rounding noise.
    """
    pts = [float(x) for x in grid]
    if len(pts) < 3:
        raise ValueError("grid must contain at least 3 points")
    if any(b <= a for a, b in zip(pts, pts[1:])):
        raise ValueError("grid must be strictly increasing")
    vals = [v.value(x) for x in pts]
    violations = []
    for (f1, f2, f3), (v1, v2, v3) in zip(
        zip(pts, pts[1:], pts[2:]), zip(vals, vals[1:], vals[2:])
    ):
        chord = v1 + (v3 - v1) * (f2 - f1) / (f3 - f1)
        tol = rel_tol * max(abs(v1), abs(v2), abs(v3), 1.0)
        if v2 < chord - tol:
            violations.append((f1, f2, f3))
    return ConcavityReport(tuple(violations), len(pts) - 2)
