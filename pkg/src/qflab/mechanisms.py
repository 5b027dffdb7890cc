"""Funding rules: pure maps from a good's contribution profile to its funding.

Rules implemented, with F the funding level and c_i the (nonnegative)
amounts contributed:

    PRIVATE        F = sum_i c_i
    LINEAR_MATCH   F = scale * sum_i c_i,            scale >= 1
    QF             F = (sum_i sqrt(c_i))**2
    CQF            F = alpha*(sum_i sqrt(c_i))**2 + (1-alpha)*sum_i c_i
    PM_QF          F = (sum_i sign_i*sqrt(c_i))**2   (signed contributions)
    BETA           F = (sum_i c_i**(1/beta))**beta,  beta >= 1

BETA nests PRIVATE (beta=1) and QF (beta=2); CQF at alpha=1 is QF.
ONE_P_ONE_V is a voting rule, not evaluable from contributions alone; its
outcome lives in the equilibrium module and only the variant tag is kept
here.

Everything in this module is a pure function of its arguments, so values
are freely shareable across threads and per-good evaluations can run in
parallel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from .errors import DivergentGradientError, PolicyError


class Variant(str, Enum):
    PRIVATE = "PRIVATE"
    LINEAR_MATCH = "LINEAR_MATCH"
    ONE_P_ONE_V = "ONE_P_ONE_V"
    QF = "QF"
    CQF = "CQF"
    PM_QF = "PM_QF"
    BETA = "BETA"


class DeficitMode(str, Enum):
    IGNORE = "IGNORE"
    SHADOW_PRICES = "SHADOW_PRICES"


@dataclass(frozen=True)
class Contribution:
    """One citizen's entry on one good: an amount paid plus a direction.

    The amount is always the money handed over; sign -1 means the citizen
    pays to *reduce* the good's funding (only meaningful under PM_QF).
    """

    citizen_id: str
    amount: float
    sign: int = 1

    def __post_init__(self):
        if not math.isfinite(self.amount) or self.amount < 0:
            raise ValueError(f"amount must be a finite nonnegative real, got {self.amount!r}")
        if self.sign not in (1, -1):
            raise ValueError(f"sign must be +1 or -1, got {self.sign!r}")


@dataclass(frozen=True)
class ContributionProfile:
    """All contributions to a single good, at most one entry per citizen."""

    good_id: str
    entries: tuple[Contribution, ...]

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        seen = set()
        for e in self.entries:
            if e.citizen_id in seen:
                raise ValueError(f"duplicate contribution by citizen {e.citizen_id!r}")
            seen.add(e.citizen_id)

    @classmethod
    def from_amounts(cls, good_id: str, amounts, signs=None) -> "ContributionProfile":
        """Build a profile from a mapping/sequence of amounts.

        ``amounts`` may be a mapping citizen_id -> amount or a plain sequence
        (citizens are then named c0, c1, ...). ``signs`` optionally maps the
        same keys to +1/-1.
        """
        if hasattr(amounts, "items"):
            items = list(amounts.items())
        else:
            items = [(f"c{i}", a) for i, a in enumerate(amounts)]
        signs = signs or {}
        entries = tuple(
            Contribution(str(cid), float(a), signs.get(cid, 1)) for cid, a in items
        )
        return cls(good_id, entries)

    def nonzero(self) -> tuple[Contribution, ...]:
        # Zero-amount entries add nothing to any rule and make gradients
        # ill-defined, so every rule drops them before evaluating.
        return tuple(e for e in self.entries if e.amount > 0)

    def total(self) -> float:
        """Money paid in, regardless of direction."""
        return math.fsum(e.amount for e in self.entries)

    def get(self, citizen_id: str) -> Contribution | None:
        for e in self.entries:
            if e.citizen_id == citizen_id:
                return e
        return None

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class MechanismConfig:
    """Which funding rule is active plus its parameters and policies.

    ``include_private_channel`` is an attack-accounting switch: whether a
    fraud/collusion calculator counts the (1-alpha) pass-through of CQF as
    part of the attacker's take (see analysis.fraud_arbitrage). It does not
    change funding evaluation.
    """

    variant: Variant
    alpha: float | None = None
    scale: float | None = None
    beta: float | None = None
    allow_negative: bool = False
    include_private_channel: bool = False
    deficit_mode: DeficitMode = DeficitMode.IGNORE

    def __post_init__(self):
        v = self.variant
        if v is Variant.CQF:
            if self.alpha is None or not (0.0 < self.alpha <= 1.0):
                raise ValueError(f"CQF requires alpha in (0, 1], got {self.alpha!r}")
        elif self.alpha is not None:
            raise ValueError(f"alpha only applies to CQF, not {v.value}")
        if v is Variant.LINEAR_MATCH:
            if self.scale is None or self.scale < 1.0:
                raise ValueError(f"LINEAR_MATCH requires scale >= 1, got {self.scale!r}")
        elif self.scale is not None:
            raise ValueError(f"scale only applies to LINEAR_MATCH, not {v.value}")
        if v is Variant.BETA:
            if self.beta is None or self.beta < 1.0:
                raise ValueError(f"BETA requires beta >= 1, got {self.beta!r}")
        elif self.beta is not None:
            raise ValueError(f"beta only applies to BETA, not {v.value}")
        if v is Variant.PM_QF:
            if not self.allow_negative:
                raise ValueError("PM_QF requires allow_negative=True")
        elif self.allow_negative:
            raise ValueError("allow_negative is only valid with PM_QF")

    @classmethod
    def private(cls, **kw) -> "MechanismConfig":
        return cls(Variant.PRIVATE, **kw)

    @classmethod
    def linear_match(cls, scale: float, **kw) -> "MechanismConfig":
        return cls(Variant.LINEAR_MATCH, scale=scale, **kw)

    @classmethod
    def one_p_one_v(cls, **kw) -> "MechanismConfig":
        return cls(Variant.ONE_P_ONE_V, **kw)

    @classmethod
    def qf(cls, **kw) -> "MechanismConfig":
        return cls(Variant.QF, **kw)

    @classmethod
    def cqf(cls, alpha: float, **kw) -> "MechanismConfig":
        return cls(Variant.CQF, alpha=alpha, **kw)

    @classmethod
    def pm_qf(cls, **kw) -> "MechanismConfig":
        kw.setdefault("allow_negative", True)
        return cls(Variant.PM_QF, **kw)

    @classmethod
    def beta_rule(cls, beta: float, **kw) -> "MechanismConfig":
        return cls(Variant.BETA, beta=beta, **kw)


@dataclass(frozen=True)
class FundingOutcome:
    """Funding per good plus the books: deficit and the uniform per-capita tax.

    deficit = sum_p F_p - sum_p sum_i c_i_p, computed literally as that
    difference. It is negative only under PM_QF (a heavily shorted good can
    receive less than was paid in), in which case the "tax" is a rebate.
    """

    funding: dict[str, float]
    deficit: float
    per_capita_tax: float


def _require_positive_signs(profile: ContributionProfile, rule: str) -> None:
    for e in profile.entries:
        if e.sign < 0:
            raise PolicyError(
                f"{rule} does not accept negative-sign contributions "
                f"(citizen {e.citizen_id!r}); use PM_QF"
            )


def _sqrt_sum(entries) -> float:
    # fsum keeps the equal-contribution scaling identities exact
    # (N equal entries of x fund exactly N**2 * x under QF).
    return math.fsum(math.sqrt(e.amount) for e in entries)


def fund_private(profile: ContributionProfile) -> float:
    """Sum of contributions: no matching, no taxes."""
    _require_positive_signs(profile, "PRIVATE")
    return math.fsum(e.amount for e in profile.nonzero())


def fund_linear_match(profile: ContributionProfile, scale: float) -> float:
    """Contributions scaled by a fixed match ratio >= 1."""
    if not (scale >= 1.0):
        raise ValueError(f"scale must be >= 1, got {scale!r}")
    _require_positive_signs(profile, "LINEAR_MATCH")
    return scale * math.fsum(e.amount for e in profile.nonzero())


def fund_qf(profile: ContributionProfile) -> float:
    """Square of the sum of square roots of the contributions."""
    _require_positive_signs(profile, "QF")
    entries = profile.nonzero()
    if len(entries) == 1:
        # (sqrt c)**2 == c holds algebraically; keep it exact in floats too
        return entries[0].amount
    s = _sqrt_sum(entries)
    return s * s


def fund_cqf(profile: ContributionProfile, alpha: float) -> float:
    """alpha-mixture of QF with unmatched private contributions.

    The operating range is alpha in (0, 1]; alpha=0 is additionally accepted
    as the degenerate private-contributions limit for reference checks
    (MechanismConfig enforces the strict range for configured runs).
    """
    if not (0.0 <= alpha <= 1.0):
        raise ValueError(f"alpha must lie in [0, 1], got {alpha!r}")
    _require_positive_signs(profile, "CQF")
    entries = profile.nonzero()
    if len(entries) == 1:
        return entries[0].amount  # alpha*c + (1-alpha)*c, exactly
    s = _sqrt_sum(entries)
    return alpha * (s * s) + (1.0 - alpha) * math.fsum(e.amount for e in entries)


def fund_pm_qf(profile: ContributionProfile) -> float:
    """Signed variant of QF: citizens may pay to reduce funding.

    Requires a config with allow_negative=True when driven through
    ``fund``. The result is a square, hence never negative, but it can be
    smaller than the money paid in.
    """
    entries = profile.nonzero()
    if len(entries) == 1:
        return entries[0].amount  # a lone signed entry still squares back
    s = math.fsum(e.sign * math.sqrt(e.amount) for e in entries)
    return s * s


def fund_beta(profile: ContributionProfile, beta: float) -> float:
    """Power-family rule (sum_i c_i**(1/beta))**beta.

    beta=1 reproduces PRIVATE and beta=2 reproduces QF.
    """
    if not (beta >= 1.0):
        raise ValueError(f"beta must be >= 1, got {beta!r}")
    _require_positive_signs(profile, "BETA")
    entries = profile.nonzero()
    if len(entries) == 1:
        return entries[0].amount  # (c**(1/beta))**beta, exactly
    inv = 1.0 / beta
    return math.fsum(e.amount**inv for e in entries) ** beta


def fund(profile: ContributionProfile, config: MechanismConfig) -> float:
    """Evaluate the configured rule on one good's profile."""
    v = config.variant
    if v is Variant.PRIVATE:
        return fund_private(profile)
    if v is Variant.LINEAR_MATCH:
        return fund_linear_match(profile, config.scale)
    if v is Variant.QF:
        return fund_qf(profile)
    if v is Variant.CQF:
        return fund_cqf(profile, config.alpha)
    if v is Variant.PM_QF:
        return fund_pm_qf(profile)
    if v is Variant.BETA:
        return fund_beta(profile, config.beta)
    raise PolicyError(
        "ONE_P_ONE_V funding is a voting outcome, not a function of "
        "contributions; use equilibrium.one_p_one_v_outcome"
    )


def funding_gradient(profile: ContributionProfile, config: MechanismConfig,
                     citizen_id: str) -> float:
    """Closed-form dF/dc_i of the configured rule at the given profile.

    The gradient diverges at a zero contribution under QF, CQF, PM_QF and
    BETA with beta > 1; those cases raise DivergentGradientError.
    """
    own = profile.get(citizen_id)
    if own is None:
        raise ValueError(f"citizen {citizen_id!r} has no entry on good {profile.good_id!r}")
    v = config.variant
    if v is Variant.PRIVATE:
        return 1.0
    if v is Variant.LINEAR_MATCH:
        return float(config.scale)
    if v is Variant.ONE_P_ONE_V:
        raise PolicyError("ONE_P_ONE_V has no contribution gradient")
    if v is Variant.BETA and config.beta == 1.0:
        return 1.0
    if own.amount == 0.0:
        raise DivergentGradientError(
            f"dF/dc diverges at zero contribution under {v.value}"
        )
    entries = profile.nonzero()
    if v is Variant.QF:
        return _sqrt_sum(entries) / math.sqrt(own.amount)
    if v is Variant.CQF:
        a = config.alpha
        return a * _sqrt_sum(entries) / math.sqrt(own.amount) + (1.0 - a)
    if v is Variant.PM_QF:
        signed = math.fsum(e.sign * math.sqrt(e.amount) for e in entries)
        return own.sign * signed / math.sqrt(own.amount)
    # BETA, beta > 1
    b = config.beta
    y = math.fsum(e.amount ** (1.0 / b) for e in entries)
    return y ** (b - 1.0) / own.amount ** ((b - 1.0) / b)


def evaluate_outcome(profiles, config: MechanismConfig, n_citizens: int) -> FundingOutcome:
    """Fund every good and account for the deficit and uniform per-capita tax."""
    if n_citizens < 1:
        raise ValueError("n_citizens must be at least 1")
    funding = {p.good_id: fund(p, config) for p in profiles}
    deficit = math.fsum(funding.values()) - math.fsum(p.total() for p in profiles)
    return FundingOutcome(funding=funding, deficit=deficit,
                          per_capita_tax=deficit / n_citizens)


def settle_deficit(outcome: FundingOutcome, n_citizens: int,
                   minor_unit: float = 1e-9) -> list[float]:
    """Split the deficit into n per-citizen taxes that sum exactly.

    The deficit is quantized to ``minor_unit`` and allocated by largest
    remainder: with an equal split all remainders tie, so the leftover
    units go to the first positions in order. The unit counts always sum
    to the quantized deficit exactly.
    """
    if n_citizens < 1:
        raise ValueError("n_citizens must be at least 1")
    if minor_unit <= 0:
        raise ValueError("minor_unit must be positive")
    total_units = round(outcome.deficit / minor_unit)
    base, rem = divmod(total_units, n_citizens)
    return [(base + 1) * minor_unit if i < rem else base * minor_unit
            for i in range(n_citizens)]
