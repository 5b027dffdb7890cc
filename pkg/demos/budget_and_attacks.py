"""The sponsor's two dials: the budget and the attack surface.

The mixing weight alpha caps the matching pool (smaller alpha, smaller
deficit) and simultaneously raises the bar for Sybil fraud (a ring must
exceed 1/alpha identities to profit).

Run: python3 demos/budget_and_attacks.py
"""

from qflab import (
    Citizen,
    MechanismConfig,
    Scenario,
    ValueFunction,
    cartel_defection,
    fraud_arbitrage,
    solve_alpha_for_budget,
    solve_equilibrium,
)

citizens = [Citizen(f"c{i}", {"g": ValueFunction.sqrt(2.0)}) for i in range(100)]
goods = ["g"]

print("== deficit as a function of alpha ==")
for alpha in (0.05, 0.2, 0.5, 1.0):
    sc = Scenario(citizens, goods, MechanismConfig.cqf(alpha))
    r = solve_equilibrium(sc)
    print(f"  alpha={alpha:4.2f}  funding={r.funding['g']:9.3f}"
          f"  deficit={r.deficit:9.3f}")

budget = 40.0
sc = Scenario(citizens, goods, MechanismConfig.cqf(0.5))
alpha_star = solve_alpha_for_budget(sc, budget)
print(f"\nlargest alpha whose deficit fits a budget of {budget:g}: {alpha_star:.4f}")

print("\n== Sybil fraud at alpha=0.1: profit vs ring size ==")
print("  (one actor splits her money across k fake identities)")
for k in (5, 10, 11, 20, 50):
    r = fraud_arbitrage(0.1, k, 1.0)
    print(f"  k={k:3d}  paid={r.paid:6.1f}  matched take={r.received:7.1f}"
          f"  profit={r.profit:7.1f}")
print(f"  breakeven ring size: {fraud_arbitrage(0.1, 2, 1.0).breakeven_size}")

print("\n== why cartels leak: the defector's arithmetic ==")
r = cartel_defection(0.1, 100, 1000.0)
print(f"  100 members at 1000 each: pool {r.pool:,.0f}, "
      f"share {r.member_share:,.0f}, net {r.complying_net:,.0f}")
print(f"  a defector keeps her 1000, still draws {r.defector_share:,.0f}")
print(f"  defection pays {r.defection_gain:,.0f} extra; "
      "revenue sharing alone cannot hold the ring together")
