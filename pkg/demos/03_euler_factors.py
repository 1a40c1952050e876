"""
Tame Euler factors for C3 wr C2
===============================

6T5 contains T = C3 x C3.  The four elements of index 2 split into two
conjugacy classes but a single class once powers are allowed, which is
why Malle's b (= 1) and the true log power (= 2) differ.
"""

from malle_engine import census, eulerlocal as el, invariants as iv, permcore as pc
from malle_engine.permcore import Permutation

db = census.ingest(census.shipped_fixtures(6, 6))
G = db.groups["6T5"]
T = next(N for N in pc.normal_subgroups(G) if N.order == 9)

print("A_2 =", [str(x) for x in el.minimal_index_set(G, T, 2)])

for y, j, f in el.factor_table(G, T):
    print(f"coset {str(y):<22} j={j}  {f}")

for action in ("conj", "conj+powers"):
    dec = el.pole_order(G, T, action)
    print(f"{action:<12} orbits {dec.count}  Burnside {dec.burnside_sum}/{dec.group_order}")

b = iv.b_twisted_interval(G, T)
print("b interval over twists:", (b.b_generic, b.b_conj), " b(Q, G) =", iv.malle_record(G).b_malle_Q)

# split primes p = 1 mod 3 below 20 all see the identity factor with j = 1
ident = el.tame_euler_factor(G, T, Permutation.identity(6), 1)
print("product over p in (7, 13, 19) at s = 1:", round(el.truncated_series(ident, [7, 13, 19], 1.0), 4))
