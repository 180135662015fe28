"""How many verifiers, checking how many clients each, cover the whole set?

Compares the closed-form inclusion-exclusion answers with the draw-until-cover
Monte Carlo oracle, including the default working point of thirty clients.
"""

from trustfed import planner

M = 30
print(f"covering M = {M} clients with uniform random subsets\n")

print("expected verifiers needed, by per-verifier subset size:")
for size in (1, 3, 5, 7, 10, 15, 30):
    closed = planner.expected_V(M, size)
    mc = planner.mc_coverage(M, size, trials=20000, seed=size)
    print(f"  L = {size:2d}: closed {closed:7.3f}   simulated {mc.mean:7.3f} +- {mc.std_err:.3f}")

print("\nclosed-form guideline for the subset size, by verifier count:")
for v in (5, 10, 15, 20):
    print(f"  V = {v:2d}: sum of miss probabilities = {planner.expected_L(M, v):6.3f}")

print("\nthe full report for the (V = 15) working point:")
report = planner.coverage_report(M, v=15, trials=20000, seed=7)
print(f"  closed form  {report['closed_form']:.4f} (suggested {report['suggested']})")
print(f"  monte carlo  {report['mc_estimate']:.4f} +- {report['mc_std_err']:.4f}")
if report["note"]:
    print(f"  note: {report['note']}")

print("\ncoverage probability with 15 verifiers at L = 7:")
est = planner.mc_coverage(M, 7, trials=50000, seed=9)
print(f"  P(all {M} covered) = {est.prob_covered(15):.3f}")
