"""
6T9 and 6T10 with and without the twisted-quotient shortcut
===========================================================

The published bounds for these two groups bound a class-group count by
the class group of a fixed field even when the acting group twists the
module.  The engine reproduces that step under the name
abelian:twisted-quotient and marks every record that uses it
uncertified.  Strict mode drops the step.
"""

from malle_engine import census, ruleledger as rl

db = census.ingest(census.shipped_fixtures(6))

for mode in ("shortcut", "strict"):
    ledger = rl.propagate(db.groups, rl.default_config(twisted_quotients=mode))
    print(f"--twisted-quotients {mode}")
    for g in ("6T7", "6T9", "6T10"):
        r = ledger[g]
        rules = [a.rule for a in ledger.chain(g)]
        print(f"  {g:>5} {r.status:<17} upper {r.best_upper.exponent}  certified={r.certified}  via {rules}")
