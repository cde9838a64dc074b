"""When does a set of partially invalid proxies still identify the effect?

Each proxy contributes a reduced-form ratio. Valid proxies agree on one
common ratio; invalid proxies scatter. With an upper bound I on how many
can be invalid, the effect is identified exactly when all subsets of size
p_z - I + 1 that admit a single ratio agree on it. A majority bound
(I <= p_z / 2) makes this automatic — no enumeration needed.

Run: python demos/03_identifiability_checks.py
"""

from proxsel import check_identification, check_majority_rule

# Majority rule: any two subsets of size p_z - I + 1 overlap, pinning a
# common ratio, as soon as the invalid bound is at most half the proxies.
print("majority rule:")
for p_z, bound in ((10, 5), (10, 6), (9, 4)):
    ok = check_majority_rule(p_z, bound)
    print(f"  p_z={p_z}, bound={bound}: identified without enumeration? {ok}")

# Enumeration, agreeing case: proxies 0..2 share the ratio 1; proxy 3 is
# off on its own, and every consistent pair agrees on q = 1.
print("\nsubset enumeration, one ratio cluster:")
rep = check_identification(
    delta_tilde=[1.0, 2.0, 3.0, 4.0],
    gamma_tilde=[1.0, 2.0, 3.0, 8.0],
    invalid_bound=3,
)
print(f"  identified: {rep.identified} ({rep.distinct_q_count} distinct ratio)")
for subset, q in rep.subsets:
    print(f"    proxies {subset}: common ratio q = {q:.3f}")

# Conflicting case: two clusters of equal size, each internally consistent
# with a different ratio — no way to tell which cluster is the valid one.
print("\nsubset enumeration, two ratio clusters:")
rep = check_identification(
    delta_tilde=[1.0, 2.0, 3.0, 4.0],
    gamma_tilde=[1.0, 2.0, 6.0, 8.0],
    invalid_bound=3,
)
print(f"  identified: {rep.identified} ({rep.distinct_q_count} distinct ratios)")
for subset, q in rep.subsets:
    print(f"    proxies {subset}: common ratio q = {q:.3f}")
