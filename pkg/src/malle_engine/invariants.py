"""Malle invariants of a transitive permutation group.

Index spectra, a(G), the subgroup generated by minimal-index elements,
concentration, the b-values, dual-module generator counts, module
nilpotency and the field multiplicity constant.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from . import permcore as pc
from .permcore import GeneratedGroup, Permutation

DUAL_SEARCH_LIMIT = 3 ** 6
MULTIPLICITY_LIMIT = 10_000


class InvariantError(ValueError):
    pass


@dataclass(frozen=True)
class SpectrumEntry:
    representative: Permutation
    size: int
    ind: int


@dataclass
class IndexSpectrum:
    degree: int
    entries: list
    complete: bool = True
    class_table: object = None

    def counts(self) -> Counter:
        """Number of group elements with each index value."""
        out: Counter = Counter()
        for e in self.entries:
            out[e.ind] += e.size
        return out

    def classes_with_ind(self, k: int) -> list:
        return [i for i, e in enumerate(self.entries) if e.ind == k]

    @property
    def a(self) -> int:
        vals = [e.ind for e in self.entries if e.ind > 0]
        if not vals:
            raise InvariantError("a(G) is undefined for the trivial group")
        return min(vals)


@dataclass(frozen=True)
class TwistedBInterval:
    b_generic: int
    b_conj: int


@dataclass
class MalleRecord:
    a: int | None
    minimal_classes: list
    t_min: GeneratedGroup
    concentrated: bool
    concentrated_abelian: bool
    b_malle_Q: int | None
    multiplicity: int | str
    certified: bool = True
    notes: list = field(default_factory=list)


def index_spectrum(G: GeneratedGroup) -> IndexSpectrum:
    ct = pc.conjugacy_classes(G)
    entries = [SpectrumEntry(r, s, r.ind()) for r, s in zip(ct.representatives, ct.sizes)]
    return IndexSpectrum(G.degree, entries, ct.complete, ct)


def a_of(U: GeneratedGroup) -> int:
    """Minimal index over the nonidentity elements of U, in U's own degree."""
    if U.order == 1:
        raise InvariantError("a(U) is undefined for the trivial group")
    if U.is_enumerable():
        t = U.table
        cyc = t.num_cycles()
        return int(U.degree - cyc[1:].max()) if t.order > 1 else 0
    return index_spectrum(U).a


def minimal_index_elements(G: GeneratedGroup) -> list:
    """Representatives of the minimal-index classes."""
    spec = index_spectrum(G)
    return [spec.entries[i].representative for i in spec.classes_with_ind(spec.a)]


def t_min(G: GeneratedGroup) -> GeneratedGroup:
    if G.order == 1:
        return G
    return pc.normal_closure(G, minimal_index_elements(G))


def concentration(G: GeneratedGroup) -> dict:
    ct = pc.conjugacy_classes(G)
    if G.order == 1:
        return {"t_min": G, "concentrated": False, "concentrated_abelian": False,
                "certified": True}
    T = t_min(G)
    conc = T.order != G.order
    return {
        "t_min": T,
        "concentrated": conc,
        "concentrated_abelian": conc and pc.is_abelian(T),
        "certified": ct.certified,
    }


def _orbit_count(nodes, edges) -> int:
    """Connected components of an undirected graph given as adjacency sets."""
    seen, count = set(), 0
    for v in nodes:
        if v in seen:
            continue
        count += 1
        stack = [v]
        while stack:
            x = stack.pop()
            if x in seen:
                continue
            seen.add(x)
            stack.extend(edges.get(x, ()))
    return count


def b_malle(G: GeneratedGroup, units: set | None = None) -> int:
    """Orbits of minimal-index classes under the coprime power maps.

    ``units`` restricts the exponents j used, modelling a base field whose
    cyclotomic character has smaller image; ``None`` means the base field
    is the rationals.
    """
    ct = pc.conjugacy_classes(G)
    spec = index_spectrum(G)
    mins = spec.classes_with_ind(spec.a)
    edges = {}
    for i in mins:
        o = ct.orders[i]
        targets = set()
        for j, c in ct.power_maps[i].items():
            if units is None or j % o in {u % o for u in units}:
                targets.add(c)
        edges[i] = targets
    return _orbit_count(mins, edges)


# ---------------------------------------------------------------------------
# abelian normal subgroups as modules


class ModuleData:
    """An abelian normal subgroup T of G with the conjugation action on it."""

    def __init__(self, G: GeneratedGroup, T: GeneratedGroup):
        if not pc.is_abelian(T):
            raise InvariantError("T is not abelian")
        if not T.is_subgroup_of(G) or not pc.is_normal(G, T):
            raise InvariantError("T is not a normal subgroup of G")
        self.G, self.T = G, T
        self.table = T.table
        self.size = self.table.order
        self.ind = T.degree - self.table.num_cycles()
        self.conj = [self.table.conjugation_map(x) for x in G.generators]
        self.orders = np.array([self.table.perm(r).order() for r in range(self.size)])
        self.exponent = int(np.lcm.reduce(self.orders)) if self.size > 1 else 1

    @property
    def a(self) -> int:
        if self.size == 1:
            raise InvariantError("a(T) is undefined for trivial T")
        return int(self.ind[1:].min())

    def A(self, d: int) -> np.ndarray:
        return np.flatnonzero(self.ind == d)

    def power_map(self, j: int) -> np.ndarray:
        E = self.table.perms.astype(np.int64)
        P = np.broadcast_to(np.arange(E.shape[1]), E.shape).copy()
        base = E
        k = j
        while k:
            if k & 1:
                P = np.take_along_axis(base, P, axis=1)
            base = np.take_along_axis(base, base, axis=1)
            k >>= 1
        return self.table.rank(P)

    def units(self) -> list:
        e = self.exponent
        return [j for j in range(1, e + 1) if math.gcd(j, e) == 1] or [1]

    def orbits_on(self, points, maps) -> list:
        points = [int(p) for p in points]
        pset = set(points)
        seen, out = set(), []
        for p in points:
            if p in seen:
                continue
            orb = [p]
            seen.add(p)
            k = 0
            while k < len(orb):
                x = orb[k]
                for m in maps:
                    y = int(m[x])
                    if y in pset and y not in seen:
                        seen.add(y)
                        orb.append(y)
                k += 1
            out.append(sorted(orb))
        return out

    def abelian_invariants(self) -> list:
        """Prime-power orders of the cyclic factors of T, sorted."""
        out = []
        n = self.size
        for p in _prime_factors(n):
            counts = []
            k = 0
            while True:
                k += 1
                c = int(np.sum((p ** k) % self.orders == 0))
                if counts and c == counts[-1]:
                    break
                counts.append(c)
            # counts[k-1] = p^(sum_i min(k, e_i)); number of e_i >= k is the increment
            logs = [0] + [round(math.log(c, p)) for c in counts]
            ge = [logs[k] - logs[k - 1] for k in range(1, len(logs))]
            ge.append(0)
            for k in range(1, len(ge)):
                out += [p ** k] * (ge[k - 1] - ge[k])
        return sorted(out)

    def rank(self) -> int:
        inv = self.abelian_invariants()
        return max(Counter(_prime_of(q) for q in inv).values()) if inv else 0


def _prime_factors(n: int) -> list:
    out, p = [], 2
    while p * p <= n:
        if n % p == 0:
            out.append(p)
            while n % p == 0:
                n //= p
        p += 1
    if n > 1:
        out.append(n)
    return out


def _prime_of(q: int) -> int:
    return _prime_factors(q)[0]


def b_twisted_interval(G: GeneratedGroup, T: GeneratedGroup, units: set | None = None) -> TwistedBInterval:
    """Orbits of the minimal-index elements of T under conjugation, with and without powers."""
    M = ModuleData(G, T)
    A = M.A(M.a)
    conj_orbits = M.orbits_on(A, M.conj)
    us = M.units() if units is None else sorted(u for u in units if math.gcd(u, M.exponent) == 1)
    pow_maps = [M.power_map(j) for j in us]
    generic_orbits = M.orbits_on(A, M.conj + pow_maps)
    return TwistedBInterval(len(generic_orbits), len(conj_orbits))


# dual module --------------------------------------------------------------


def _character_table(M: ModuleData):
    """All characters of T as value vectors in Z/e over the elements of T."""
    t = M.table
    e = M.exponent
    gens: list = []
    mask = None
    for g in M.T.generators:
        r = t.rank_of(g)
        if mask is not None and mask[r]:
            continue
        mask = t.closure(mask, gens, [g])
        gens.append(g)
    r = len(gens)
    # exponent words along a spanning tree
    W = np.full((t.order, r), -1, dtype=np.int64)
    W[0] = 0
    frontier = np.array([0])
    succ = np.stack([t.right_multiply(np.arange(t.order), g) for g in gens], axis=1)
    while len(frontier):
        nxt = []
        for i in range(r):
            tgt = succ[frontier, i]
            new = W[tgt, 0] < 0
            src, tgt = frontier[new], tgt[new]
            tgt, first = np.unique(tgt, return_index=True)
            W[tgt] = W[src[first]]
            W[tgt, i] += 1
            nxt.append(tgt)
        frontier = np.unique(np.concatenate(nxt)) if nxt else np.array([], dtype=np.int64)
    rel = []
    for i in range(r):
        D = W[succ[:, i]] - W
        D[:, i] -= 1
        rel.append(D)
    R = np.unique(np.concatenate(rel) % e, axis=0)
    cand = np.array(list(itertools.product(range(e), repeat=r)), dtype=np.int64).reshape(-1, r)
    ok = ((R @ cand.T) % e == 0).all(axis=0)
    chars = cand[ok]
    values = (W @ chars.T % e).T
    if len(values) != t.order:
        raise InvariantError("character count does not match |T|")
    return values


def dual_module_generators(G: GeneratedGroup, T: GeneratedGroup) -> tuple:
    """Smallest number of characters generating the dual of T as a G-module.

    Returns ``(d, exact)``; when |T| is beyond the search limit the rank of
    T is returned with ``exact=False``, which is a valid upper bound.
    """
    M = ModuleData(G, T)
    if M.size == 1:
        return 0, True
    if M.size > DUAL_SEARCH_LIMIT:
        return M.rank(), False
    e = M.exponent
    values = _character_table(M)
    key = {tuple(v): i for i, v in enumerate(values)}
    inv_conj = [np.argsort(c) for c in M.conj]
    act = []
    for ic in inv_conj:
        act.append(np.array([key[tuple(v[ic])] for v in values]))
    add_cache: dict = {}

    def add(i, j):
        k = (i, j) if i <= j else (j, i)
        if k not in add_cache:
            add_cache[k] = key[tuple((values[i] + values[j]) % e)]
        return add_cache[k]

    def span(idx):
        sub = {0}
        frontier = list(idx)
        while frontier:
            x = frontier.pop()
            if x in sub:
                continue
            new = [x]
            while new:
                y = new.pop()
                if y in sub:
                    continue
                sub.add(y)
                for a in act:
                    z = int(a[y])
                    if z not in sub:
                        new.append(z)
                for s in list(sub):
                    z = add(s, y)
                    if z not in sub:
                        new.append(z)
        return sub

    # orbit representatives for the first generator
    orbit_rep = []
    seen = set()
    for i in range(1, len(values)):
        if i in seen:
            continue
        orbit_rep.append(i)
        seen |= set(_orbit(i, act))
    full = len(values)
    rank = M.rank()
    for d in range(1, rank + 1):
        for first in orbit_rep:
            for rest in itertools.combinations(range(1, full), d - 1):
                if len(span((first,) + rest)) == full:
                    return d, True
    return rank, True


def _orbit(i, act):
    orb = [i]
    seen = {i}
    k = 0
    while k < len(orb):
        for a in act:
            j = int(a[orb[k]])
            if j not in seen:
                seen.add(j)
                orb.append(j)
        k += 1
    return orb


def augmentation_series(G: GeneratedGroup, T: GeneratedGroup) -> list:
    """T, [T,G], [[T,G],G], ... until it stabilises."""
    out = [T]
    while True:
        cur = out[-1]
        if cur.order == 1:
            break
        nxt = pc.commutator_subgroup(G, cur)
        if nxt.order == cur.order:
            break
        out.append(nxt)
    return out


def is_nilpotent_module(G: GeneratedGroup, T: GeneratedGroup) -> bool:
    ModuleData(G, T)
    return augmentation_series(G, T)[-1].order == 1


def is_simple_module(G: GeneratedGroup, T: GeneratedGroup) -> bool:
    """T has no proper nonzero G-stable subgroup."""
    M = ModuleData(G, T)
    if M.size == 1:
        return False
    t = M.table
    for r in range(1, t.order):
        N = pc.normal_closure(G, [t.perm(r)])
        if N.order != M.size:
            return False
    return True


# ---------------------------------------------------------------------------
# field multiplicity


def field_multiplicity(G: GeneratedGroup, limit: int = MULTIPLICITY_LIMIT) -> int | str:
    """[N(G) n N(Stab 1) : C(G) n N(Stab 1)] in S_n.

    For transitive G this equals the number of permutations fixing the
    point 1 that normalize G, found by backtracking over generator images.
    """
    if G.order > limit or not G.is_enumerable():
        return "unavailable"
    if not G.is_transitive():
        raise InvariantError("field multiplicity needs a transitive group")
    n = G.degree
    if n == 1:
        return 1
    gens = _small_generating_set(G)
    t = G.table
    by_type: dict = {}
    for r in range(t.order):
        p = t.perm(r)
        by_type.setdefault(p.cycle_type(), []).append(p._img)
    cands = [by_type[g.cycle_type()] for g in gens]
    gimgs = [g._img for g in gens]
    count = 0

    def extend(sigma, chosen):
        # propagate sigma(p^g) = sigma(p)^phi(g) over chosen generators
        sigma = dict(sigma)
        stack = list(sigma)
        while stack:
            p = stack.pop()
            for g, h in zip(gimgs, chosen):
                q, v = g[p], h[sigma[p]]
                if q in sigma:
                    if sigma[q] != v:
                        return None
                else:
                    sigma[q] = v
                    stack.append(q)
        if len(set(sigma.values())) != len(sigma):
            return None
        return sigma

    def search(k, sigma, chosen):
        nonlocal count
        if k == len(gens):
            if len(sigma) == n:
                count += 1
            return
        for h in cands[k]:
            s2 = extend(sigma, chosen + [h])
            if s2 is not None:
                search(k + 1, s2, chosen + [h])

    search(0, {0: 0}, [])
    return count


def _small_generating_set(G: GeneratedGroup) -> list:
    t = G.table
    gens: list = []
    mask = None
    for g in G.generators:
        if mask is not None and mask[t.rank_of(g)]:
            continue
        mask = t.closure(mask, gens, [g])
        gens.append(g)
    return gens or [G.identity()]


# ---------------------------------------------------------------------------


def malle_record(G: GeneratedGroup, with_multiplicity: bool = True) -> MalleRecord:
    ct = pc.conjugacy_classes(G)
    notes = []
    if not ct.complete:
        notes.append("class table sampled; invariants not certified")
    if G.order == 1:
        return MalleRecord(None, [], G, False, False, None, 1, True, notes)
    spec = index_spectrum(G)
    conc = concentration(G)
    mult = field_multiplicity(G) if with_multiplicity else "unavailable"
    return MalleRecord(
        a=spec.a,
        minimal_classes=spec.classes_with_ind(spec.a),
        t_min=conc["t_min"],
        concentrated=conc["concentrated"],
        concentrated_abelian=conc["concentrated_abelian"],
        b_malle_Q=b_malle(G),
        multiplicity=mult,
        certified=ct.certified,
        notes=notes,
    )
