"""A tour of the funding rules on small hand-checkable profiles.

Run: python3 demos/funding_rules.py
"""

from qflab import (
    ContributionProfile,
    fund_beta,
    fund_cqf,
    fund_linear_match,
    fund_pm_qf,
    fund_private,
    fund_qf,
)


def profile(amounts, signs=None):
    return ContributionProfile.from_amounts("demo", amounts, signs)


print("== one profile, every rule ==")
p = profile([1.0, 4.0])
print("contributions        : 1 and 4")
print(f"private              : {fund_private(p):g}")
print(f"linear match x2      : {fund_linear_match(p, 2):g}")
print(f"quadratic (QF)       : {fund_qf(p):g}   <- (sqrt(1)+sqrt(4))^2")
print(f"capital-constrained  : {fund_cqf(p, 0.5):g}   (alpha=0.5 mix)")
print(f"power family beta=3  : {fund_beta(p, 3):g}")

# The quadratic rule rewards breadth: hold the per-person amount at one
# unit and grow the crowd. Funding grows with the square of the crowd.
print("\n== crowd size n, one unit each, QF funding n^2 ==")
for n in (1, 2, 5, 10, 100):
    print(f"  n={n:4d}  ->  {fund_qf(profile([1.0] * n)):8g}")

# Splitting a community in half costs three quarters of the money: each
# half gets a quarter of what the union got.
print("\n== splitting penalty ==")
union = fund_qf(profile([2.0] * 10))
half = fund_qf(profile([2.0] * 5))
print(f"  union of 10 at 2.0 : {union:g}")
print(f"  each half of 5     : {half:g}  (= union/4: {union / 4:g})")

# A single backer gets no subsidy at all; the rule degenerates to a
# private purchase.
print("\n== single contributor reverts to private ==")
print(f"  QF of a lone 7.3   : {fund_qf(profile([7.3])):g}")

# Signed contributions let opponents pay to shrink the pool.
print("\n== signed contributions (PM_QF) ==")
q = profile({"fan": 9.0, "critic": 1.0}, {"critic": -1})
print(f"  +9 and -1          : {fund_pm_qf(q):g}   <- (3 - 1)^2")
