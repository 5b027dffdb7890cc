"""Threshold public goods and refundable pledges.

Five citizens value a good through a logistic (S-shaped) curve: nearly
worthless until funding reaches the mid-point near 30, saturating above
it. Nobody funds it alone, so myopic play from an empty pool never
starts. A round with an assurance threshold and full refunds makes
pledging safe, and the good gets built.

Run: python3 demos/assurance_round.py
"""

from qflab import (
    AssurancePolicy,
    Citizen,
    MechanismConfig,
    MyopicBestResponse,
    Scenario,
    ThresholdPledger,
    ValueFunction,
    ledger_to_csv,
    run_round,
)

citizens = [Citizen(f"c{i}", {"bridge": ValueFunction.sshaped(20.0, 0.5, 30.0)})
            for i in range(5)]
scenario = Scenario(citizens, ["bridge"], MechanismConfig.qf())

print("== myopic play, no assurance ==")
myopic = {c.id: MyopicBestResponse(c, scenario.goods) for c in citizens}
ledger = run_round(scenario, myopic, window_end=12, delay=0, seed=1)
s = ledger.settlement["bridge"]
print(f"  events: {len(ledger.events)}, settles {s.status.value} at {s.funding:g}")
print("  (zero is a self-fulfilling standstill: no one moves first)")

print("\n== refundable pledges toward a threshold of 30 ==")
policy = AssurancePolicy({"bridge": 30.0})
pledgers = {c.id: ThresholdPledger(c.id, {"bridge": 1.6}) for c in citizens}
ledger = run_round(scenario, pledgers, window_end=12, assurance=policy,
                   delay=0, seed=1)
s = ledger.settlement["bridge"]
print(f"  settles {s.status.value} at {s.funding:g} (threshold 30)")
print("  ledger:")
for line in ledger_to_csv(ledger).splitlines():
    print("   ", line)

print("\n== same pledges, unreachable threshold: money comes back ==")
policy = AssurancePolicy({"bridge": 100.0})
ledger = run_round(scenario, pledgers, window_end=12, assurance=policy,
                   delay=0, seed=1)
s = ledger.settlement["bridge"]
print(f"  settles {s.status.value}; refunds {s.refund_total:g} "
      "(every pledge, in full)")
