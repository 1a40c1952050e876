"""Acceptance criteria 1 to 8, one printed PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -v``; the lines are printed even
when output capture is on.  Timed criteria run in a fresh interpreter so
that caches warmed by other tests do not flatter them.
"""

import json
import random
import subprocess
import sys
import textwrap
import time
from pathlib import Path

import pytest

from conftest import abelian_normal_pairs, main_path, shipped
from malle_engine import census, eulerlocal as el, invariants as iv, permcore as pc
from malle_engine import pushforward as pfw, ruleledger as rl

DATA = Path(__file__).parent / "data"


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, detail
    return emit


def cold(code: str) -> dict:
    """Run code in a new interpreter; it must print one JSON object last."""
    proc = subprocess.run([sys.executable, "-c", textwrap.dedent(code)],
                          capture_output=True, text=True, check=True)
    return json.loads(proc.stdout.strip().splitlines()[-1])


def test_criterion_1_degree6_table(report):
    out = cold("""
        import json, time
        t0 = time.perf_counter()
        from malle_engine import census, ruleledger as rl
        db = census.ingest(census.shipped_fixtures(6))
        sextic = [g for g in db.ids() if g.startswith("6T")]
        conc = sum(census.group_flags(g, db.groups[g]).concentrated for g in sextic)
        ledger = rl.propagate(db.groups, rl.default_config())
        bad = [c.group for c in census.check_degree6(ledger) if not c.ok]
        print(json.dumps({"n": len(sextic), "conc": conc, "bad": bad,
                          "t": time.perf_counter() - t0}))
    """)
    ok = out["n"] == 16 and out["conc"] == 11 and not out["bad"] and out["t"] < 10
    report(1, ok, f"partition {out['conc']}/{out['n'] - out['conc']}, mismatched rows {out['bad']}, "
                  f"{out['t']:.2f}s (limit 10s)")


def test_criterion_2_pushforward_values(report):
    def values(gid, order):
        G = shipped(6).groups[gid]
        T = next(N for N in pc.normal_subgroups(G) if N.order == order and pc.is_abelian(N))
        pfd = pfw.pushforward_index(G, T)
        by = {}
        for g in G.elements():
            if not T.contains(g):
                by.setdefault(pfd.image(g).order(), set()).add(pfd.value(g))
        return by
    v8, v10 = values("6T8", 4), values("6T10", 9)
    s8 = set().union(*v8.values())
    ok = s8 == {3, 4} and v10 == {2: {2}, 4: {4}}
    report(2, ok, f"6T8 -> {sorted(s8)}; 6T10 -> order-2 {sorted(v10.get(2, ()))}, "
                  f"order-4 {sorted(v10.get(4, ()))}")


def test_criterion_3_hol_d4(report):
    out = cold("""
        import json, time
        from malle_engine import census, invariants as iv, permcore as pc, ruleledger as rl
        db = census.ingest(census.shipped_fixtures(8, 8)).subset(["8T26"])
        t0 = time.perf_counter()
        H = db.groups["8T26"]
        rec = iv.malle_record(H, with_multiplicity=False)
        T = rec.t_min
        b = iv.b_twisted_interval(H, T)
        mins = sum(1 for r in pc.conjugacy_classes(H).representatives if r.ind() == rec.a)
        ledger = rl.propagate(db.groups, rl.default_config())
        r = ledger["8T26"].best_asymptotic
        print(json.dumps({
            "a": rec.a, "mins": mins, "T": T.order, "T_abelian": pc.is_abelian(T),
            "T_exp": iv.ModuleData(H, T).exponent, "b": [b.b_generic, b.b_conj],
            "e": None if r is None else str(r.exponent), "lp": None if r is None else list(r.log_power),
            "t": time.perf_counter() - t0}))
    """)
    ok = (out["a"] == 2 and out["mins"] == 2 and out["T"] == 8 and out["T_abelian"]
          and out["T_exp"] == 2 and out["b"] == [2, 2] and out["e"] == "1/2"
          and out["lp"] == [2, 2] and out["t"] < 5)
    report(3, ok, f"a={out['a']}, {out['mins']} minimal classes, t_min C2^3={out['T'] == 8 and out['T_exp'] == 2}, "
                  f"b={tuple(out['b'])}, asymptotic X^{out['e']} log-power {out['lp']}, "
                  f"{out['t']:.2f}s (limit 5s)")


def test_criterion_4_kluners_discrepancy(report):
    from conftest import ledger_le6
    r = ledger_le6()["6T5"]
    b_malle = r.summary["b_malle"]
    lp = None if r.best_asymptotic is None else r.best_asymptotic.log_power
    ok = b_malle == 1 and lp == (2, 2)
    report(4, ok, f"b_malle(6T5) = {b_malle}, certified log-power {lp}")


def test_criterion_5_oracle_equivalence(report):
    frozen = json.loads((DATA / "oracle_degree_le8.json").read_text())
    t0 = time.perf_counter()
    bad = []
    for gid in frozen:
        got, _ = main_path(gid)
        if "spectrum" in got:
            got["spectrum"] = [list(x) for x in got["spectrum"]]
        if any(got[k] != frozen[gid][k] for k in got):
            bad.append(gid)
    t = time.perf_counter() - t0
    ok = not bad and t < 120 and len(frozen) == len(shipped(8))
    report(5, ok, f"{len(frozen) - len(bad)}/{len(frozen)} groups agree with the enumeration oracle, "
                  f"{t:.1f}s (limit 120s)")


def test_criterion_6_euler_burnside(report):
    pairs = abelian_normal_pairs(12, 500)
    chosen = random.Random(20240601).sample(pairs, 50)
    bad = []
    for gid, i in chosen:
        G = shipped(12).groups[gid]
        T = pc.normal_subgroups(G)[i]
        b = iv.b_twisted_interval(G, T)
        c = el.pole_order(G, T, "conj")
        p = el.pole_order(G, T, "conj+powers")
        if not (c.burnside_holds and p.burnside_holds and (c.count, p.count) == (b.b_conj, b.b_generic)):
            bad.append((gid, T.order))
    report(6, not bad, f"50 of {len(pairs)} (G, T) pairs with |G| <= 500, failures {bad}")


def test_criterion_7_census_counts(report):
    oracle = json.loads((DATA / "oracle_census_le12.json").read_text())
    db = shipped(12)
    flags = {f.id: f for f in census.all_flags(db)}
    bad = [g for g, row in oracle.items()
           if (flags[g].concentrated, flags[g].concentrated_abelian)
           != (row["concentrated"], row["concentrated_abelian"])]
    main = census.stats(db)
    want: dict = {}
    for g, row in oracle.items():
        d = want.setdefault(db.entries[g].degree, [0, 0, 0])
        d[0] += 1
        d[1] += row["concentrated"]
        d[2] += row["concentrated_abelian"]
    got = {d: [r["total"], r["concentrated"], r["concentrated_abelian"]]
           for d, r in main["per_degree"].items()}
    table = (Path(__file__).parent.parent / "docs" / "census_le12.md").read_text()
    published = census.format_stats(main) in table
    ok = not bad and got == want and len(oracle) == len(db) and published
    last = main["cumulative"][12]
    report(7, ok, f"degree <= 12: {last['total']} groups, {last['concentrated']} concentrated, "
                  f"{last['concentrated_abelian']} in an abelian normal subgroup; per-group "
                  f"mismatches {len(bad)}; reference table current: {published}")


def test_criterion_8_determinism_and_replay(report):
    cfg1 = rl.default_config(threads=1)
    cfg3 = rl.default_config(threads=3)
    db = shipped(6)
    a = census.dump_ledger(rl.propagate(db.groups, cfg1), cfg1)
    b = census.dump_ledger(rl.propagate(db.groups, cfg3), cfg3)
    ledger, _ = census.parse_ledger(a)
    n = rl.replay_ledger(ledger)
    stored = sum(1 for r in ledger.records.values()
                 for x in (r.best_upper, r.best_lower, r.best_asymptotic) if x is not None)
    ok = a == b and n == stored
    report(8, ok, f"threads 1 vs 3 byte-identical: {a == b}; replayed {n}/{stored} stored bounds")


def test_criterion_1_strict_mode_is_reported_not_hidden(capsys):
    # the twisted-quotient shortcut is the only thing standing between strict
    # mode and criterion 1; make the dependence visible in the test output
    from conftest import ledger_le6
    bad = sorted(c.group for c in census.check_degree6(ledger_le6("strict")) if not c.ok)
    with capsys.disabled():
        print(f"\nnote: with --twisted-quotients strict, criterion 1 rows {bad} fail "
              f"(6T9 -> {ledger_le6('strict')['6T9'].best_upper.exponent}, "
              f"6T10 -> {ledger_le6('strict')['6T10'].best_upper.exponent})")
    assert bad == ["6T10", "6T9"]
