import math
import random

import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from conftest import abelian_normal_pairs, group, shipped
from malle_engine import eulerlocal as el, invariants as iv, permcore as pc
from malle_engine.permcore import Permutation


def normal_of_order(G, n):
    return next(N for N in pc.normal_subgroups(G) if N.order == n and pc.is_abelian(N))


def c3c3():
    G = group("6T5")
    return G, normal_of_order(G, 9)


def outside(G, T):
    return next(y for y in el.coset_representatives(G, T) if not T.contains(y))


def brute_orbits(G, T, powers):
    # plain union of orbits on A_a(T), straight from the element list
    M = iv.ModuleData(G, T)
    A = el.minimal_index_set(G, T, M.a)
    gens = list(G.generators)
    units = [u for u in range(1, M.exponent + 1) if math.gcd(u, M.exponent) == 1] if powers else [1]
    seen, count = set(), 0
    for a in A:
        if a in seen:
            continue
        count += 1
        stack = [a]
        seen.add(a)
        while stack:
            x = stack.pop()
            for y in [x.conjugate(g) for g in gens] + [x ** u for u in units]:
                if y not in seen:
                    seen.add(y)
                    stack.append(y)
    return count


# minimal index sets ------------------------------------------------------

def test_a2_of_c3_squared():
    G, T = c3c3()
    A = el.minimal_index_set(G, T, 2)
    assert len(A) == 4
    assert all(x.order() == 3 and x.ind() == 2 for x in A)


def test_a0_is_identity():
    G, T = c3c3()
    assert el.minimal_index_set(G, T, 0) == [Permutation.identity(6)]


def test_a2_of_v4_in_s4():
    G = group("6T8")
    T = normal_of_order(G, 4)
    A = el.minimal_index_set(G, T, 2)
    assert len(A) == 3 and Permutation.identity(6) not in A


def test_empty_index_set():
    G, T = c3c3()
    assert el.minimal_index_set(G, T, 5) == []


# twisted fixed points -----------------------------------------------------

def test_identity_fixes_everything():
    G, T = c3c3()
    A = el.minimal_index_set(G, T, 2)
    assert el.twisted_fixed_points(A, Permutation.identity(6), 1, 3) == 4


def test_block_swap_fixes_nothing():
    G, T = c3c3()
    A = el.minimal_index_set(G, T, 2)
    assert el.twisted_fixed_points(A, outside(G, T), 1, 3) == 0


def test_inversion_fixes_nothing():
    G, T = c3c3()
    A = el.minimal_index_set(G, T, 2)
    assert el.twisted_fixed_points(A, Permutation.identity(6), 2, 3) == 0


def test_j_must_be_a_unit():
    G, T = c3c3()
    A = el.minimal_index_set(G, T, 2)
    with pytest.raises(el.EulerError):
        el.twisted_fixed_points(A, Permutation.identity(6), 3, 3)
    with pytest.raises(el.EulerError):
        el.tame_euler_factor(G, T, Permutation.identity(6), 6)


# tame factors -------------------------------------------------------------

def test_quadratic_factor():
    G = group("2T1")
    f = el.tame_euler_factor(G, G, Permutation.identity(2), 1)
    assert f.coefficients == {0: 1, 1: 1}
    assert str(f) == "1 + 1 q^-1s"


def test_6t5_identity_and_swap_cosets():
    G, T = c3c3()
    e = el.tame_euler_factor(G, T, Permutation.identity(6), 1)
    assert e.coefficient(2) == 4 and e.coefficient(4) == 4
    s = el.tame_euler_factor(G, T, outside(G, T), 1)
    assert s.coefficient(2) == 0 and s.coefficient(4) == 2


def test_6t5_inverse_character():
    G, T = c3c3()
    assert el.tame_euler_factor(G, T, Permutation.identity(6), 2).coefficients == {0: 1}


def test_coset_outside_g_rejected():
    G, T = c3c3()
    with pytest.raises(el.EulerError):
        el.tame_euler_factor(G, T, Permutation([2, 1, 3, 4, 5, 6]), 1)


def test_factor_table_covers_cosets_and_units():
    G, T = c3c3()
    rows = el.factor_table(G, T)
    assert len(rows) == (G.order // T.order) * 2
    for _, _, f in rows:
        for d, c in f.coefficients.items():
            assert 0 <= c <= len(el.minimal_index_set(G, T, d))


def test_constant_term_is_enforced():
    with pytest.raises(el.InvariantViolation):
        el.TameFactor({0: 2}, Permutation.identity(2), 1, 2)


def test_truncated_series_is_a_finite_product():
    f = el.TameFactor({0: 1, 1: 1}, Permutation.identity(2), 1, 2)
    assert el.truncated_series(f, [2, 3], 1.0) == pytest.approx(1.5 * 4 / 3)


# pole orders --------------------------------------------------------------

def test_hol_d4_pole_order():
    H = group("8T26")
    dec = el.pole_order(H, iv.t_min(H), "conj")
    assert dec.count == 2 and dec.burnside_holds
    assert sum(dec.sizes) == len(el.minimal_index_set(H, iv.t_min(H), 2))


def test_6t5_pole_orders():
    G, T = c3c3()
    assert el.pole_order(G, T, "conj").count == 2
    assert el.pole_order(G, T, "conj+powers").count == 1


def test_trivial_action_gives_singletons():
    G = group("4T2")
    T = normal_of_order(G, 2)
    dec = el.pole_order(G, T)
    assert dec.count == len(el.minimal_index_set(G, T, iv.ModuleData(G, T).a))
    assert set(dec.sizes) == {1}


def test_pole_order_errors():
    G, T = c3c3()
    with pytest.raises(el.EulerError):
        el.pole_order(G, T, "frobenius")
    with pytest.raises(el.EulerError):
        el.pole_order(G, pc.GeneratedGroup([Permutation.identity(6)], 6))


# properties over random (G, T) pairs --------------------------------------

small_pairs = st.sampled_from(abelian_normal_pairs(8))


def _pair(p):
    gid, i = p
    G = shipped(8).groups[gid]
    return gid, G, pc.normal_subgroups(G)[i]


@settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(small_pairs, st.integers(0, 2**32 - 1))
def test_factor_is_independent_of_representative(p, seed):
    _, G, T = _pair(p)
    rng = random.Random(seed)
    y = rng.choice(el.coset_representatives(G, T))
    e = iv.ModuleData(G, T).exponent
    j = rng.choice([u for u in range(1, e + 1) if math.gcd(u, e) == 1])
    # tame_euler_factor raises if any of the 20 representatives disagree
    f = el.tame_euler_factor(G, T, y, j, checks=20, rng=rng)
    t = rng.choice(list(T.elements()))
    assert el.tame_euler_factor(G, T, y * t, j, checks=0).coefficients == f.coefficients


@settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(small_pairs)
def test_identity_factor_counts_all_of_t(p):
    _, G, T = _pair(p)
    f = el.tame_euler_factor(G, T, Permutation.identity(G.degree), 1)
    assert f.total() == T.order


@settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(small_pairs)
def test_burnside_and_agreement_with_invariants(p):
    _, G, T = _pair(p)
    b = iv.b_twisted_interval(G, T)
    conj = el.pole_order(G, T, "conj")
    both = el.pole_order(G, T, "conj+powers")
    assert conj.burnside_holds and both.burnside_holds
    assert (conj.count, both.count) == (b.b_conj, b.b_generic)
    assert conj.count == brute_orbits(G, T, False)
    assert both.count == brute_orbits(G, T, True)
    assert sum(conj.sizes) == sum(both.sizes)
