"""Event-driven funding rounds with assurance thresholds and refunds.

A round is a window of integer ticks during which citizens contribute and
withdraw. Published funding levels may lag the true state by a fixed delay
(a crude information-security knob). At the close of the window each good
settles: if its funding meets the assurance threshold it is funded at that
level, otherwise every commitment is refunded in full.

Determinism contract: a round is a single sequential event loop; same-tick
agents act in an order drawn from a seeded generator, so identical
(scenario, agents, seed) inputs replay to bit-identical ledgers. Replaying
a ledger's events reproduces every recorded snapshot exactly.
"""

from __future__ import annotations

import io
import json
import math
import random
from dataclasses import dataclass, field
from enum import Enum

from .mechanisms import Contribution, ContributionProfile, MechanismConfig, fund
from .preferences import Citizen
from .equilibrium import Scenario, best_response_full


class EventKind(str, Enum):
    CONTRIBUTE = "CONTRIBUTE"
    WITHDRAW = "WITHDRAW"


class SettlementStatus(str, Enum):
    FUNDED = "FUNDED"
    REFUNDED = "REFUNDED"


@dataclass(frozen=True)
class RoundEvent:
    time: int
    citizen_id: str
    good_id: str
    kind: EventKind
    amount: float

    def __post_init__(self):
        if self.time < 0:
            raise ValueError("tick must be nonnegative")
        if not (self.amount > 0) or not math.isfinite(self.amount):
            raise ValueError("event amount must be a positive finite real")


@dataclass(frozen=True)
class GoodSettlement:
    status: SettlementStatus
    funding: float
    refunds: dict[str, float]

    @property
    def refund_total(self) -> float:
        return math.fsum(self.refunds.values())


@dataclass(frozen=True)
class AssurancePolicy:
    """Per-good funding thresholds; goods short of their threshold refund."""

    threshold: dict[str, float] = field(default_factory=dict)
    refund_on_miss: bool = True

    def __post_init__(self):
        for g, t in self.threshold.items():
            if t < 0:
                raise ValueError(f"threshold for {g!r} must be nonnegative")


class RoundLedger:
    """Append-only event log plus per-tick snapshots and the settlement."""

    def __init__(self, window_end: int):
        if window_end < 1:
            raise ValueError("window_end must be at least 1")
        self.window_end = window_end
        self.events: list[RoundEvent] = []
        self.snapshots: list[tuple[int, dict[str, float]]] = []
        self.settlement: dict[str, GoodSettlement] | None = None
        self._committed: dict[tuple[str, str], float] = {}

    def committed(self, citizen_id: str, good_id: str) -> float:
        return self._committed.get((citizen_id, good_id), 0.0)

    def commitments_by_good(self, as_of: float | None = None) -> dict[str, dict[str, float]]:
        """Committed amounts per good, optionally replayed up to a tick."""
        if as_of is None:
            out: dict[str, dict[str, float]] = {}
            for (cid, gid), amt in self._committed.items():
                if amt > 0:
                    out.setdefault(gid, {})[cid] = amt
            return out
        state: dict[tuple[str, str], float] = {}
        for e in self.events:
            if e.time > as_of:
                continue
            key = (e.citizen_id, e.good_id)
            delta = e.amount if e.kind is EventKind.CONTRIBUTE else -e.amount
            state[key] = state.get(key, 0.0) + delta
        out = {}
        for (cid, gid), amt in state.items():
            if amt > 0:
                out.setdefault(gid, {})[cid] = amt
        return out

    def apply(self, event: RoundEvent) -> "RoundLedger":
        if self.settlement is not None:
            raise ValueError("ledger is sealed: the round has settled")
        if event.time >= self.window_end:
            raise ValueError(
                f"event at tick {event.time} rejected: window closed at "
                f"{self.window_end}")
        key = (event.citizen_id, event.good_id)
        held = self._committed.get(key, 0.0)
        if event.kind is EventKind.WITHDRAW and event.amount > held:
            raise ValueError(
                f"withdrawal of {event.amount} rejected: {event.citizen_id!r} "
                f"holds only {held} on {event.good_id!r}")
        delta = event.amount if event.kind is EventKind.CONTRIBUTE else -event.amount
        self._committed[key] = held + delta
        self.events.append(event)
        return self


def apply_event(ledger: RoundLedger, event: RoundEvent) -> RoundLedger:
    return ledger.apply(event)


def provisional_snapshot(ledger: RoundLedger, tick: int, config: MechanismConfig,
                         delay: float = 0, goods=()) -> dict[str, float]:
    """Funding per good computed from commitments as of tick - delay.

    delay 0 publishes the current state; an infinite delay publishes
    nothing (all zeros, the state before tick 0). ``goods`` fixes the set
    of reported goods (defaults to every good seen in the ledger), which
    keeps recorded snapshots replayable when goods first appear mid-round.
    """
    if delay < 0:
        raise ValueError("delay must be nonnegative")
    cutoff = tick - delay
    all_goods = {e.good_id for e in ledger.events} | set(goods)
    if cutoff < 0:
        return {g: 0.0 for g in all_goods}
    by_good = ledger.commitments_by_good(as_of=cutoff)
    out = {}
    for g in all_goods:
        amounts = by_good.get(g, {})
        profile = ContributionProfile(
            g, tuple(Contribution(cid, amt) for cid, amt in sorted(amounts.items())))
        out[g] = fund(profile, config)
    return out


@dataclass(frozen=True)
class AgentView:
    """What a policy sees when asked to act: the tick, the delayed
    commitment state, its own current commitments, and the round's rules."""

    tick: int
    delayed_commitments: dict[str, dict[str, float]]
    own_committed: dict[str, float]
    config: MechanismConfig
    assurance: AssurancePolicy


class MyopicBestResponse:
    """Plays the static best response against the published (delayed) state.

    One event per tick: the good with the largest gap between the target
    and the current own commitment. Positive-direction contributions only.
    """

    def __init__(self, citizen: Citizen, goods: list[str], min_step: float = 1e-7):
        self.citizen = citizen
        self.goods = [g for g in goods if g in citizen.values]
        self.min_step = min_step

    def propose(self, view: AgentView) -> tuple[str, EventKind, float] | None:
        best = None
        for good in self.goods:
            others = {
                cid: amt
                for cid, amt in view.delayed_commitments.get(good, {}).items()
                if cid != self.citizen.id
            }
            profile = ContributionProfile(
                good, tuple(Contribution(cid, amt) for cid, amt in sorted(others.items())))
            target = best_response_full(self.citizen, good, profile, view.config).amount
            gap = target - view.own_committed.get(good, 0.0)
            if abs(gap) >= self.min_step and (best is None or abs(gap) > abs(best[1])):
                best = (good, gap)
        if best is None:
            return None
        good, gap = best
        if gap > 0:
            return good, EventKind.CONTRIBUTE, gap
        return good, EventKind.WITHDRAW, -gap


class ThresholdPledger:
    """Commits a fixed share toward refund-protected goods and then holds.

    Pledging is safe as long as a missed threshold refunds in full, so the
    policy simply tops its commitment up to the share, one good per tick.
    """

    def __init__(self, citizen_id: str, shares: dict[str, float], min_step: float = 1e-12):
        self.citizen_id = citizen_id
        self.shares = dict(shares)
        self.min_step = min_step

    def propose(self, view: AgentView) -> tuple[str, EventKind, float] | None:
        for good in sorted(self.shares):
            protected = (view.assurance.refund_on_miss
                         and good in view.assurance.threshold)
            if not protected:
                continue
            gap = self.shares[good] - view.own_committed.get(good, 0.0)
            if gap >= self.min_step:
                return good, EventKind.CONTRIBUTE, gap
        return None


def assurance_settlement(ledger: RoundLedger, policy: AssurancePolicy,
                         config: MechanismConfig,
                         goods=()) -> dict[str, GoodSettlement]:
    """Settle every good: fund at its rule value when the threshold is met,
    otherwise refund each citizen's committed amount exactly."""
    by_good = ledger.commitments_by_good()
    goods = (set(by_good) | set(policy.threshold)
             | {e.good_id for e in ledger.events} | set(goods))
    settlement = {}
    for g in sorted(goods):
        amounts = by_good.get(g, {})
        profile = ContributionProfile(
            g, tuple(Contribution(cid, amt) for cid, amt in sorted(amounts.items())))
        F = fund(profile, config)
        threshold = policy.threshold.get(g, 0.0)
        if F >= threshold or not policy.refund_on_miss:
            settlement[g] = GoodSettlement(SettlementStatus.FUNDED, F, {})
        else:
            settlement[g] = GoodSettlement(
                SettlementStatus.REFUNDED, 0.0, dict(sorted(amounts.items())))
    ledger.settlement = settlement
    return settlement


def run_round(scenario: Scenario, agents: dict[str, object], window_end: int,
              assurance: AssurancePolicy | None = None, delay: float = 0,
              seed: int = 0) -> RoundLedger:
    """Run a full contribution window and settle it.

    ``agents`` maps citizen ids to policy objects exposing
    ``propose(view) -> (good, kind, amount) | None``. Each tick the agents
    act once each, in a seeded random order; actions see commitments as of
    tick - delay plus the agent's own current holdings. After the last tick
    the assurance policy settles every good. Failure to reach any
    particular state is not an error; the ledger records whatever happened.
    """
    policy = assurance or AssurancePolicy()
    ledger = RoundLedger(window_end)
    rng = random.Random(seed)
    ids = sorted(agents)
    for tick in range(window_end):
        order = ids[:]
        rng.shuffle(order)
        for cid in order:
            cutoff = tick - delay
            delayed = ledger.commitments_by_good(as_of=cutoff) if cutoff >= 0 else {}
            own = {g: ledger.committed(cid, g) for g in scenario.goods}
            view = AgentView(tick=tick, delayed_commitments=delayed,
                             own_committed=own, config=scenario.mechanism,
                             assurance=policy)
            action = agents[cid].propose(view)
            if action is None:
                continue
            good, kind, amount = action
            ledger.apply(RoundEvent(tick, cid, good, kind, amount))
        ledger.snapshots.append(
            (tick, provisional_snapshot(ledger, tick, scenario.mechanism, delay,
                                        goods=scenario.goods)))
    assurance_settlement(ledger, policy, scenario.mechanism, goods=scenario.goods)
    return ledger


def ledger_to_csv(ledger: RoundLedger) -> str:
    """Event rows plus a settlement footer block."""
    buf = io.StringIO()
    buf.write("tick,citizen_id,good_id,kind,amount\n")
    for e in ledger.events:
        buf.write(f"{e.time},{e.citizen_id},{e.good_id},{e.kind.value},{e.amount!r}\n")
    if ledger.settlement is not None:
        buf.write("# settlement\n")
        buf.write("good_id,status,funding,refund_total\n")
        for g, s in sorted(ledger.settlement.items()):
            buf.write(f"{g},{s.status.value},{s.funding!r},{s.refund_total!r}\n")
    return buf.getvalue()


def snapshots_to_json(ledger: RoundLedger) -> str:
    return json.dumps(
        [{"tick": t, "funding": f} for t, f in ledger.snapshots],
        sort_keys=True,
    )
