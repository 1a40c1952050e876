import dataclasses
import json
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from conftest import group, ledger_le6, shipped
from malle_engine import census, permcore as pc, pushforward as pfw, ruleledger as rl
from malle_engine.ruleledger import Exponent, GrowthBound

F = Fraction


def normal_of_order(G, n):
    return next(N for N in pc.normal_subgroups(G) if N.order == n and pc.is_abelian(N))


# exponents ----------------------------------------------------------------

rationals = st.fractions(min_value=0, max_value=5, max_denominator=60)


@settings(max_examples=1000, deadline=None)
@given(rationals, st.booleans(), rationals)
def test_epsilon_never_decides_a_comparison(e, eps, c):
    assert Exponent.of(e, eps).lt(c) == (e < c)


@settings(max_examples=300, deadline=None)
@given(rationals, rationals, rationals, rationals)
def test_interval_arithmetic_contains_point_results(a, b, c, d):
    x = Exponent(min(a, b), max(a, b))
    y = Exponent(min(c, d), max(c, d))
    s = x + y
    for p in (x.lo, x.hi):
        for q in (y.lo, y.hi):
            assert s.lo <= p + q <= s.hi
    k = F(3, 7)
    assert (x * k).lo == x.lo * k and (x * k).hi == x.hi * k
    if x.hi < y.lo:
        assert x.lt(y)
    if x.lt(y):
        assert all(p < q for p in (x.lo, x.hi) for q in (y.lo, y.hi))


def test_lt_is_conservative_on_overlap():
    a = Exponent(F(1, 4), F(1, 2))
    b = Exponent(F(1, 3), F(2, 3))
    assert not a.lt(b) and not b.lt(a)


def test_exponent_rejects_empty_interval_and_negative_scale():
    with pytest.raises(rl.LedgerError):
        Exponent(F(1), F(0))
    with pytest.raises(rl.LedgerError):
        Exponent.of(1) * -1


def test_exponent_json_round_trip():
    e = rl.BSTTTZ2.with_eps() * 2 + F(1, 3)
    assert Exponent.from_json(json.loads(json.dumps(e.to_json()))) == e


def test_growth_bound_validation():
    with pytest.raises(rl.LedgerError):
        GrowthBound("sideways", Exponent.of(1))
    with pytest.raises(rl.LedgerError):
        GrowthBound("upper", Exponent.of(1), (0, 1))


# torsion ------------------------------------------------------------------

def test_torsion_two_in_small_degree_is_bsttz_interval():
    t = rl.torsion_exponent(2, 3)
    assert (t.lo, t.hi, t.eps) == (F(2784, 10000), F(2785, 10000), True)


def test_torsion_two_in_large_degree():
    assert rl.torsion_exponent(2, 6) == Exponent.of(F(5, 12), True)


def test_torsion_conjectural_pack():
    assert rl.torsion_exponent(3, 17, pack="conjectural-torsion") == Exponent.of(0, True)
    assert rl.torsion_exponent(3, 4, tags={"conjectural"}) == Exponent.of(0, True)


def test_torsion_ell_group_and_minkowski():
    assert rl.torsion_exponent(3, 9, tags={"3-group"}) == Exponent.of(0, True)
    assert rl.torsion_exponent(5, 2) == Exponent.of(F(1, 2), True)


@pytest.mark.parametrize("ell", [2, 3, 5, 7])
@pytest.mark.parametrize("deg", [1, 2, 3, 4, 5, 8, 23])
def test_torsion_never_exceeds_minkowski(ell, deg):
    assert rl.torsion_exponent(ell, deg).hi <= F(1, 2)


def test_torsion_rejects_bad_degree_and_pack():
    with pytest.raises(rl.LedgerError):
        rl.torsion_exponent(2, 0)
    with pytest.raises(rl.LedgerError):
        rl.torsion_exponent(2, 3, pack="wishful")


def test_hom_cl_examples():
    assert rl.hom_cl_exponent([2], 3) == rl.BSTTTZ2.with_eps()
    assert rl.hom_cl_exponent([4], 3) == rl.BSTTTZ2.with_eps() * 2
    assert rl.hom_cl_exponent([], 3) == rl.ZERO
    assert rl.hom_cl_exponent([1], 3) == rl.ZERO
    assert rl.hom_cl_exponent([3, 3], 2) == Exponent.of(1, True)


# seeds --------------------------------------------------------------------

def test_seed_schmidt_for_s6():
    out = rl.seed_bounds(group("6T16"), rl.EngineConfig(), "6T16")
    assert GrowthBound("upper", Exponent.of(2)).same_value(
        min(out, key=lambda b: b.exponent.sort_key()))


def test_seed_nilpotent_for_q8():
    out = rl.seed_bounds(group("8T5"), rl.EngineConfig(), "8T5")
    assert any(b.kind == "upper" and b.exponent == Exponent.of(F(1, 4), True) for b in out)


def test_seed_abelian_c2_is_asymptotic():
    out = rl.seed_bounds(group("2T1"), rl.EngineConfig(), "2T1")
    assert any(b.kind == "asymptotic" and b.exponent == Exponent.of(1) for b in out)


def test_seed_regular_three_eighths():
    out = rl.seed_bounds(group("8T5"), rl.EngineConfig(), "8T5")
    assert any(b.exponent == Exponent.of(F(3, 8), True) for b in out)
    # 8T9 has order 16 in degree 8, so it is not regular
    out = rl.seed_bounds(group("8T9"), rl.EngineConfig(), "8T9")
    assert not any(b.exponent == Exponent.of(F(3, 8), True) for b in out)


def test_weak_lower_only_when_assumed():
    G = group("6T16")
    assert not any(b.kind == "lower" for b in rl.seed_bounds(G, rl.EngineConfig(), "6T16"))
    low = [b for b in rl.seed_bounds(G, rl.EngineConfig(assume_weak_lower=True), "6T16")
           if b.kind == "lower"]
    assert low and low[0].exponent == Exponent.of(1, True)


def test_shipped_seed_file_loads_with_citations():
    seeds = rl.load_seed_config(rl.DEFAULT_SEEDS_PATH)
    assert seeds and all(s.citation for s in seeds)
    assert {"6T2", "6T3"} <= {s.selector for s in seeds}


def test_seed_without_citation_is_rejected(tmp_path):
    p = tmp_path / "seeds.json"
    p.write_text(json.dumps({"version": 1, "seeds": [
        {"selector": "6T3", "kind": "asymptotic", "numerator": 1, "denominator": 2}]}))
    with pytest.raises(rl.SeedConfigError, match="citation"):
        rl.load_seed_config(p)


@pytest.mark.parametrize("text", ["{not json", json.dumps({"version": 2, "seeds": []}),
                                  json.dumps([1, 2])])
def test_seed_file_shape_errors(tmp_path, text):
    p = tmp_path / "seeds.json"
    p.write_text(text)
    with pytest.raises(rl.SeedConfigError):
        rl.load_seed_config(p)


def test_seed_bad_kind_and_log_power():
    base = {"selector": "6T3", "numerator": 1, "denominator": 2, "citation": "x"}
    with pytest.raises(rl.SeedConfigError):
        rl.parse_seed_entries([dict(base, kind="maybe")])
    with pytest.raises(rl.SeedConfigError):
        rl.parse_seed_entries([dict(base, kind="upper", log_power=[2, 1])])


def test_config_digest_ignores_threads_only():
    a = rl.default_config(threads=1)
    assert a.digest() == rl.default_config(threads=4).digest()
    assert a.digest() != rl.default_config(twisted_quotients="strict").digest()


def test_config_validation():
    with pytest.raises(rl.LedgerError):
        rl.EngineConfig(h1_mode="fancy")
    with pytest.raises(rl.LedgerError):
        rl.EngineConfig(deg_k=0)


# H1 and quotient counts ---------------------------------------------------

def test_h1ur_hol_d4_nilpotent_module():
    H = group("8T26")
    from malle_engine import invariants as iv
    best = rl.h1ur_exponent(H, iv.t_min(H))[0]
    assert best[0] == Exponent.of(0, True)


def test_h1ur_6t5_quadratic_block_field():
    G = group("6T5")
    T = normal_of_order(G, 9)
    opts = dict((tag, t) for t, tag in rl.h1ur_exponent(G, T))
    induced = [t for tag, t in opts.items() if tag.startswith("induced from block field")]
    # Minkowski 1/2 at the quadratic block field, measured against disc of the sextic
    assert rl.hom_cl_exponent([3], 2) == Exponent.of(F(1, 2), True)
    assert induced and induced[0] == Exponent.of(F(1, 6), True)


def test_h1ur_trivial_action_over_q():
    for gid in ("2T1", "4T1"):
        G = group(gid)
        T = normal_of_order(G, 2)
        assert rl.h1ur_exponent(G, T)[0] == (Exponent.of(0), "trivial action")


def test_quotient_count_6t8_comparison_with_s3():
    G = group("6T8")
    opts = rl.quotient_count_exponent(G, normal_of_order(G, 4), ledger_le6(),
                                      groups=shipped(6).groups)
    assert opts[0] == (Exponent.of(F(1, 3)), "comparison with 6T2, c_lo=1")


def test_quotient_count_6t10_nilpotent_quotient():
    G = group("6T10")
    opts = dict((tag, b) for b, tag in rl.quotient_count_exponent(G, normal_of_order(G, 9)))
    assert opts["nilpotent quotient"] == Exponent.of(F(1, 2), True)


def test_quotient_count_6t4_tower_transfer():
    G = group("6T4")
    opts = rl.quotient_count_exponent(G, normal_of_order(G, 4), ledger_le6(),
                                      groups=shipped(6).groups)
    tower = [b for b, tag in opts if tag.startswith("tower transfer m/n=1/2")]
    assert tower and min(tower, key=Exponent.sort_key) == Exponent.of(F(1, 4))


def test_quotient_count_without_ledger_skips_database_options():
    G = group("6T8")
    opts = rl.quotient_count_exponent(G, normal_of_order(G, 4))
    assert all("6T2" not in tag for _, tag in opts)


# the three theorems -------------------------------------------------------

def _abelian(gid, order, **kw):
    G = group(gid)
    return rl.apply_abelian_theorem(G, normal_of_order(G, order), ledger_le6(),
                                    rl.default_config(**kw), shipped(6).groups, gid=gid)


def test_abelian_theorem_6t4():
    b, app = _abelian("6T4", 4)
    assert (b.kind, b.exponent, b.log_power) == ("asymptotic", Exponent.of(F(1, 2)), (1, 1))
    assert app.theta.lt(F(1, 2))


def test_abelian_theorem_hol_d4():
    from malle_engine import invariants as iv
    H = group("8T26")
    b, app = rl.apply_abelian_theorem(H, iv.t_min(H), None, rl.default_config(),
                                      shipped(8).groups, gid="8T26")
    assert (b.kind, b.exponent, tuple(b.log_power)) == ("asymptotic", Exponent.of(F(1, 2)), (2, 2))


def test_abelian_theorem_6t9_stays_upper():
    b, app = _abelian("6T9", 9)
    assert (b.kind, b.exponent) == ("upper", Exponent.of(F(1, 2), True))
    assert not app.theta.lt(F(1, 2))


def test_abelian_theorem_rejects_bad_t():
    G = group("6T13")
    with pytest.raises(rl.LedgerError):
        rl.apply_abelian_theorem(G, G)
    S = group("6T16")
    A6 = next(N for N in pc.normal_subgroups(S) if N.order == 360)
    with pytest.raises(rl.LedgerError):
        rl.apply_abelian_theorem(S, A6)


def test_imprimitive_6t6():
    G = group("6T6")
    tw = next(t for t in pfw.tower_types(G) if t.A_is_abelian)
    b, app = rl.apply_imprimitive_cor(G, tw, ledger_le6(), groups=shipped(6).groups, gid="6T6")
    assert (b.kind, b.exponent) == ("asymptotic", Exponent.of(1))
    assert app.theta.lt(app.plan.gate)


def test_imprimitive_rejects_nonabelian_block():
    G = group("6T13")
    tw = next(t for t in pfw.tower_types(G) if not t.A_is_abelian)
    with pytest.raises(rl.LedgerError):
        rl.apply_imprimitive_cor(G, tw)


def test_s3_wreath_6t13():
    b, app = rl.apply_s3_wreath(group("6T13"), ledger_le6(), groups=shipped(6).groups, gid="6T13")
    assert (b.kind, b.exponent) == ("asymptotic", Exponent.of(1))


def test_s3_wreath_s3_degree_nine():
    S3 = group("3T2")
    W = pc.wreath(S3, S3)
    assert (W.degree, W.order) == (9, 1296) and rl.is_s3_wreath(W)
    b, _ = rl.apply_s3_wreath(W, ledger_le6(), groups=shipped(6).groups, gid="W")
    assert (b.kind, b.exponent) == ("asymptotic", Exponent.of(1))
    an = rl.Analyzer(shipped(6).groups, rl.default_config())
    plan = next(p for i, tw in enumerate(pfw.tower_types(W)) for p in an._s3_wreath_plans("W", W, tw, i)
                if p.rule == "s3-wreath:pointwise" and p.ref == "3T2")
    app = rl._apply(plan, ledger_le6()["3T2"].best_upper)
    # beta_B = 1 from the S3 cubic seed plus (2/3) of the cubic 2-torsion exponent
    assert app.theta == Exponent(1 + F(2, 3) * F(2784, 10000), 1 + F(2, 3) * F(2785, 10000), True)
    assert app.theta.lt(2)


def test_s3_wreath_gate_boundary():
    base = next(p for i, tw in enumerate(pfw.tower_types(group("6T13")))
                for p in rl.Analyzer({}, rl.EngineConfig())._s3_wreath_plans("X", group("6T13"), tw, i))
    # beta_B = 5/3 with Minkowski t = 1/2 scaled by 2/3 lands exactly on the gate
    plan = dataclasses.replace(base, const=Exponent.of(F(1, 3), True), ref="B")
    app = rl._apply(plan, GrowthBound("upper", Exponent.of(F(5, 3)), provenance=("B#seed",)))
    assert app.theta.lo == 2
    assert (app.output.kind, app.output.exponent) == ("upper", Exponent.of(1, True))


def test_s3_wreath_rejects_other_groups():
    with pytest.raises(rl.LedgerError):
        rl.apply_s3_wreath(group("6T8"))


def test_plan_without_input_is_an_error():
    plan = rl.Plan("x", "G", "s", Exponent.of(0), ref="H")
    with pytest.raises(rl.LedgerError):
        rl.assemble(plan, None)


# propagation --------------------------------------------------------------

def test_gate_consistency_across_the_ledger():
    L = ledger_le6()
    for app in L.applications.values():
        if app.plan.gate is not None and app.output.kind == "asymptotic":
            assert app.theta.hi < app.plan.gate


def test_no_gate_sits_inside_an_interval():
    # inward perturbation of theta can only flip a gate whose value lies in [lo, hi]
    for app in ledger_le6().applications.values():
        g = app.plan.gate
        if g is not None:
            assert app.theta.hi < g or app.theta.lo >= g


def test_status_semantics():
    L = ledger_le6()
    for r in L.records.values():
        assert (r.status == "proven-asymptotic") == (r.best_asymptotic is not None)
        if r.best_asymptotic is not None:
            assert r.best_upper.exponent == r.best_asymptotic.exponent
            assert r.best_lower.exponent == r.best_asymptotic.exponent


def test_nilpotent_with_abelian_tmin_is_asymptotic():
    L = rl.propagate(shipped(8).subset(["8T5", "8T9", "4T3", "8T3"]).groups, rl.default_config())
    for g in ("8T5", "8T9", "4T3"):
        r = L[g]
        assert r.status == "proven-asymptotic"
        assert r.best_asymptotic.exponent == Exponent.of(F(1, r.summary["a"]))


def test_empty_database_gives_empty_ledger():
    L = rl.propagate({}, rl.default_config())
    assert L.records == {} and L.applications == {}


def test_propagation_is_idempotent():
    cfg = rl.default_config()
    L = ledger_le6()
    again = rl.propagate(shipped(6).groups, cfg, initial=L)
    assert census.dump_ledger(again, cfg).replace(f'"rounds": {again.rounds}', "") == \
        census.dump_ledger(L, cfg).replace(f'"rounds": {L.rounds}', "")
    assert again.rounds == 1


def test_more_rounds_never_worsen_a_bound():
    groups = shipped(6).groups
    cfg = rl.default_config()
    an = rl.analyse_database(groups, cfg)
    prev = None
    for r in range(1, 5):
        L = rl.propagate(groups, dataclasses.replace(cfg, max_rounds=r), analyses=an)
        if prev is not None:
            for g, rec in L.records.items():
                old = prev[g].best_upper
                if old is not None:
                    assert rl._upper_key(rec.best_upper) <= rl._upper_key(old)
        prev = L


def test_replay_reproduces_every_bound():
    L = ledger_le6()
    assert rl.replay_ledger(L) >= len(L.records) - 1


def test_replay_detects_tampering():
    L = ledger_le6()
    app_id = L["6T5"].best_asymptotic.provenance[-1]
    app = L.applications[app_id]
    bad = dataclasses.replace(app, output=GrowthBound("asymptotic", Exponent.of(F(1, 3)),
                                                      app.output.log_power, app.output.provenance))
    forged = rl.Ledger(L.records, dict(L.applications, **{app_id: bad}), L.config_digest, L.rounds)
    with pytest.raises(rl.ReplayError):
        rl.replay(forged, app_id)
    with pytest.raises(rl.ReplayError):
        rl.replay(L, "nope#000000000000")


def test_chain_ends_in_the_stored_bound():
    L = ledger_le6()
    chain = L.chain("6T8")
    assert chain[-1].output.same_value(L["6T8"].best_asymptotic)
    assert chain[0].input_bound is None


def test_twisted_shortcut_marks_records_uncertified():
    L = ledger_le6()
    assert not L["6T9"].certified and not L["6T10"].certified
    assert L["6T5"].certified and L["6T8"].certified
    strict = ledger_le6("strict")
    assert strict["6T9"].best_upper.exponent == Exponent.of(F(3, 4), True)
    assert strict["6T10"].best_upper.exponent == Exponent.of(1, True)
    assert strict["6T9"].certified and strict["6T10"].certified


# published lower bounds for the sextic groups; asymptotic rows use their exponent
KNOWN_LOWER = {
    "6T1": F(1, 3), "6T2": F(1, 3), "6T3": F(1, 2), "6T4": F(1, 2), "6T5": F(1, 2),
    "6T6": F(1), "6T7": F(1, 2), "6T8": F(1, 2), "6T9": F(1, 2), "6T10": F(1, 2),
    "6T11": F(1), "6T12": F(59, 1920), "6T13": F(1), "6T14": F(1, 2),
    "6T15": F(359, 7200), "6T16": F(7, 10),
}


@pytest.mark.parametrize("gid", sorted(KNOWN_LOWER, key=lambda g: int(g[2:])))
def test_upper_bounds_respect_published_lower_bounds(gid):
    for mode in ("shortcut", "strict"):
        r = ledger_le6(mode)[gid]
        assert r.best_upper is not None
        assert r.best_upper.exponent.hi >= KNOWN_LOWER[gid]
        if r.best_asymptotic is not None:
            assert r.best_asymptotic.exponent.lo == KNOWN_LOWER[gid]


def test_order_key_sorts_by_degree_then_number():
    ids = ["6T10", "6T2", "4T5", "12T1"]
    assert sorted(ids, key=lambda g: rl.order_key(g, int(g.split("T")[0]))) == \
        ["4T5", "6T2", "6T10", "12T1"]
