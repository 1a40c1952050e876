"""
Hol(D4) in degree 8
===================

8T26 has a = 2 and its elements of index 2 fall into two conjugacy
classes inside an abelian normal C2^3.  That gives X^(1/2) with one
power of log X.
"""

from malle_engine import census, eulerlocal as el, invariants as iv, permcore as pc
from malle_engine import pushforward as pfw, ruleledger as rl

db = census.ingest(census.shipped_fixtures(8, 8))
H = db.groups["8T26"]
rec = iv.malle_record(H, with_multiplicity=False)
T = rec.t_min
print("order", H.order, "a =", rec.a, "b =", rec.b_malle_Q, "|T_min| =", T.order, "abelian:", pc.is_abelian(T))

# pole order of the local series = orbits on the minimal-index elements of T
dec = el.pole_order(H, T, "conj")
print("orbits on A_a(T):", dec.count, "sizes", dec.sizes)

# the quotient side: pushforward index on H/T and the resulting exponent
pfd = pfw.pushforward_index(H, T)
print("a outside T:", pfd.a_outside)
for t, rule in rl.h1ur_exponent(H, T)[:3]:
    print("H1_ur candidate", t, "from", rule)

bound, app = rl.apply_abelian_theorem(H, T, gid="8T26")
print("theta =", app.theta, "gate", app.plan.gate, "->", bound)
