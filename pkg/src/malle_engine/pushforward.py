"""Pushforward index data, tower types and ordering comparisons.

The pushforward of the index to G/T assigns each coset the cheapest index
of a lift.  Everything here is tame data: wild conductors are never
computed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from . import permcore as pc
from .invariants import IndexSpectrum, SpectrumEntry
from .permcore import GeneratedGroup, Permutation

UNLIFTABLE = "unliftable"
ISOMORPHISM_ORDER_LIMIT = 200_000
ISOMORPHISM_CHECKS = 4000
MATCHING_CAP = 5000


class PushforwardError(ValueError):
    pass


@dataclass
class PushforwardData:
    quotient: GeneratedGroup
    pf_index: dict
    witnesses: dict
    a_outside: int | None
    complete: bool
    kernel: GeneratedGroup
    coset_map: Callable
    image: Callable
    class_values: list = field(default_factory=list)

    def value(self, g: Permutation) -> int:
        return self.pf_index[self.coset_map(g)]

    def as_spectrum(self) -> IndexSpectrum:
        """pf values as a spectrum on the classes of the regular quotient."""
        ct = pc.conjugacy_classes(self.quotient)
        entries = [SpectrumEntry(r, s, v) for r, s, v in
                   zip(ct.representatives, ct.sizes, self.class_values)]
        return IndexSpectrum(self.quotient.degree, entries, self.complete, ct)


def pushforward_index(G: GeneratedGroup, T: GeneratedGroup,
                      cap: int = pc.DEFAULT_INDEX_CAP) -> PushforwardData:
    """q_*ind on every coset of T, computed class by class.

    The image of a G-class in G/T is a single class of the quotient, so the
    minimum over lifts is a class function there: the minimum of ind over
    the G-classes mapping onto it.
    """
    quo = pc.quotient_regular(G, T, cap)
    Q = quo.group
    reps = [r._img for r in quo.coset_representatives]
    index_of = quo.coset_map

    def image(g: Permutation) -> Permutation:
        return Permutation._raw(tuple(index_of(Permutation._raw(pc._mul(r, g._img))) for r in reps))

    ct = pc.conjugacy_classes(G)
    cq = pc.conjugacy_classes(Q)
    best: dict = {}
    for i, rep in enumerate(ct.representatives):
        k = cq.class_of(image(rep))
        v = rep.ind()
        if k not in best or v < best[k][0]:
            best[k] = (v, i)
    class_values = [best[k][0] if k in best else UNLIFTABLE for k in range(len(cq))]
    class_values[0] = 0
    # coset -> class of the quotient element sending the identity coset there
    m = Q.order
    if Q.is_enumerable():
        t = Q.table
        coset_of_rank = t.perms[:, 0].astype(np.int64)
        coset_class = np.empty(m, dtype=np.int64)
        coset_class[coset_of_rank] = cq.class_of_rank
    else:
        raise pc.ThresholdExceeded("quotient is too large to enumerate")
    pf = {c: class_values[int(coset_class[c])] for c in range(m)}
    witnesses = {0: G.identity()}
    for k, (v, i) in sorted(best.items()):
        if k == 0:
            continue
        start = ct.representatives[i]
        seen = {index_of(start): start}
        frontier = [start]
        while frontier:
            nxt = []
            for y in frontier:
                for x in G.generators:
                    z = y.conjugate(x)
                    c = index_of(z)
                    if c not in seen:
                        seen[c] = z
                        nxt.append(z)
            frontier = nxt
        witnesses.update(seen)
    outside = [v for c, v in pf.items() if c != 0 and v != UNLIFTABLE]
    return PushforwardData(
        quotient=Q,
        pf_index=pf,
        witnesses=witnesses,
        a_outside=min(outside) if outside else None,
        complete=ct.complete,
        kernel=T,
        coset_map=index_of,
        image=image,
        class_values=class_values,
    )


def a_outside(G: GeneratedGroup, T: GeneratedGroup) -> int:
    """Smallest index of an element of G outside the normal subgroup T."""
    if T.order == G.order:
        raise PushforwardError("a(G-T) is undefined when T = G")
    ct = pc.conjugacy_classes(G)
    return min(r.ind() for r in ct.representatives if not T.contains(r))


# ---------------------------------------------------------------------------
# towers


@dataclass
class TowerType:
    system: pc.BlockSystem
    B: GeneratedGroup
    A_block: GeneratedGroup
    T_kernel: GeneratedGroup
    block_stabilizer: GeneratedGroup

    @property
    def m(self) -> int:
        return self.B.degree

    @property
    def a(self) -> int:
        return self.A_block.degree

    @property
    def A_is_abelian(self) -> bool:
        return pc.is_abelian(self.A_block)


def block_kernel(G: GeneratedGroup, system: pc.BlockSystem) -> GeneratedGroup:
    """Kernel of the action on blocks: the intersection of all block stabilizers."""
    K = G
    for block in system.blocks:
        if K.order == 1:
            break
        K = pc.setwise_stabilizer(K, block)
    return K


def tower_types(G: GeneratedGroup) -> list:
    if pc.is_primitive(G):
        return []
    out = []
    for system in pc.block_systems(G):
        first = system.blocks[0]
        S = pc.setwise_stabilizer(G, first)
        A = pc.restrict(S, first)
        out.append(TowerType(system, system.block_action, A, block_kernel(G, system), S))
    return out


def imprimitive_transfer_exponent(tower: TowerType, n: int) -> Fraction:
    """m/n: q_*disc up to X bounds the degree-m discriminant by X^(m/n)."""
    return Fraction(tower.m, n)


# ---------------------------------------------------------------------------
# ordering comparisons


@dataclass(frozen=True)
class OrderingComparison:
    c_lo: Fraction
    c_hi: Fraction
    ambiguous: bool = False
    verified: bool = False


def _class_data(ct: pc.ClassTable, primes: list) -> list:
    """(order, size) plus the class of rep^p for each prime p."""
    out = []
    for r, s, o in zip(ct.representatives, ct.sizes, ct.orders):
        out.append((o, s, tuple(ct.class_of(r ** p) for p in primes)))
    return out


def _primes_upto(n: int) -> list:
    return [p for p in range(2, n + 1) if all(p % q for q in range(2, int(p ** 0.5) + 1))]


def match_class_data(ct1: pc.ClassTable, ct2: pc.ClassTable, cap: int = MATCHING_CAP) -> tuple:
    """Bijections of classes preserving order, size and prime power maps.

    Returns ``(matchings, truncated)``.  This is a consistency search on
    class data only, not an isomorphism proof.
    """
    if len(ct1) != len(ct2):
        return [], False
    N = max(max(ct1.orders), max(ct2.orders))
    primes = [p for p in _primes_upto(N)]
    d1, d2 = _class_data(ct1, primes), _class_data(ct2, primes)
    k = len(d1)
    order = sorted(range(k), key=lambda i: sum(1 for x in d2 if x[:2] == d1[i][:2]))
    out: list = []
    truncated = False

    def consistent(phi):
        for i, j in phi.items():
            for a, b in zip(d1[i][2], d2[j][2]):
                if a in phi and phi[a] != b:
                    return False
        return True

    def search(pos, phi, used):
        nonlocal truncated
        if len(out) >= cap:
            truncated = True
            return
        if pos == k:
            out.append([phi[i] for i in range(k)])
            return
        i = order[pos]
        for j in range(k):
            if j in used or d2[j][:2] != d1[i][:2]:
                continue
            phi[i] = j
            if consistent(phi):
                used.add(j)
                search(pos + 1, phi, used)
                used.discard(j)
            del phi[i]

    search(0, {}, set())
    return out, truncated


def _generating_subset(G: GeneratedGroup, tries: int = 300) -> list:
    """A short generating list, preferring pairs whose second member lies in a small class."""
    ct = pc.conjugacy_classes(G)
    if G.is_enumerable() and G.order > 1:
        t = G.table
        rng = np.random.default_rng(0)
        best = None
        order = sorted(range(1, len(ct)), key=lambda c: ct.sizes[c])
        for c in order:
            ranks = np.flatnonzero(ct.class_of_rank == c)
            x = t.perm(int(ranks[0]))
            if G.subgroup([x]).order == G.order:
                return [x]
        for _ in range(tries):
            c1, c2 = rng.integers(1, len(ct), size=2)
            x = ct.representatives[c1]
            ranks = np.flatnonzero(ct.class_of_rank == c2)
            y = t.perm(int(rng.choice(ranks)))
            if G.subgroup([x, y]).order == G.order:
                cost = ct.sizes[c2]
                if best is None or cost < best[0]:
                    best = (cost, [x, y])
        if best is not None:
            return best[1]
    gens: list = []
    H = None
    for g in sorted(G.generators, key=lambda p: -p.order()):
        if g.is_identity() or (H is not None and H.contains(g)):
            continue
        gens.append(g)
        H = G.subgroup(gens)
        if H.order == G.order:
            break
    return gens


def _graph_group(g1: list, g2: list, n1: int, n2: int) -> GeneratedGroup:
    gens = []
    for a, b in zip(g1, g2):
        img = list(a._img) + [n1 + x for x in b._img]
        gens.append(Permutation._raw(tuple(img)))
    return GeneratedGroup(gens, n1 + n2)


def isomorphism_class_maps(G1: GeneratedGroup, G2: GeneratedGroup,
                           checks: int = ISOMORPHISM_CHECKS) -> tuple:
    """Class maps induced by verified isomorphisms G1 -> G2.

    An assignment of generator images is a homomorphism exactly when the
    subgroup of G1 x G2 generated by the pairs has order |G1|.  Returns
    ``(maps, exhaustive)``; the first generator image is taken up to
    conjugacy, which does not change the induced class map.
    """
    if G1.order != G2.order:
        return [], True
    if G1.order > ISOMORPHISM_ORDER_LIMIT or not (G1.is_enumerable() and G2.is_enumerable()):
        return [], False
    if pc.abstract_fingerprint(G1) != pc.abstract_fingerprint(G2):
        return [], True
    ct1, ct2 = pc.conjugacy_classes(G1), pc.conjugacy_classes(G2)
    if G1.order == 1:
        return [[0]], True
    t1, t2 = G1.table, G2.table
    gens = _generating_subset(G1)
    sig_of2 = np.array([ct2.orders[c] * 10 ** 9 + ct2.sizes[c] for c in range(len(ct2))])

    def sig1(x):
        c = ct1.class_of(x)
        return ct1.orders[c] * 10 ** 9 + ct1.sizes[c]

    # partial assignments as rank tuples, filtered by the classes of products
    first = [j for j in range(len(ct2)) if sig_of2[j] == sig1(gens[0])]
    partial = [(t2.rank_of(ct2.representatives[j]),) for j in first]
    for pos in range(1, len(gens)):
        want = sig1(gens[pos])
        cand = np.flatnonzero(sig_of2[ct2.class_of_rank] == want)
        prod_sigs = [sig1(gens[j] * gens[pos]) for j in range(pos)]
        ext = []
        for pre in partial:
            ok = np.ones(len(cand), dtype=bool)
            for j, s in enumerate(prod_sigs):
                pr = t2.compose(np.full(len(cand), pre[j]), cand)
                ok &= sig_of2[ct2.class_of_rank[pr]] == s
            ext += [pre + (int(c),) for c in cand[ok]]
        partial = ext
    maps: list = []
    seen: set = set()
    exhaustive = True
    n1, n2 = G1.degree, G2.degree
    for k, images in enumerate(partial):
        if k >= checks:
            exhaustive = False
            break
        imgs = [t2.perm(r) for r in images]
        D = _graph_group(gens, imgs, n1, n2)
        if D.order != G1.order or G2.subgroup(imgs).order != G2.order:
            continue
        E = D.table.perms.astype(np.int64)
        left = ct1.class_of_rank[t1.rank(E[:, :n1])]
        right = ct2.class_of_rank[t2.rank(E[:, n1:] - n1)]
        phi = [0] * len(ct1)
        for a, b in zip(left, right):
            phi[int(a)] = int(b)
        key = tuple(phi)
        if key not in seen:
            seen.add(key)
            maps.append(phi)
    return maps, exhaustive


def _ratios(spec1: IndexSpectrum, spec2: IndexSpectrum, phi: list) -> tuple:
    vals = []
    for i, j in enumerate(phi):
        a, b = spec1.entries[i].ind, spec2.entries[j].ind
        if a == 0 and b == 0:
            continue
        if a == 0 or b == 0:
            raise PushforwardError("a nonidentity class has index 0")
        vals.append(Fraction(b, a))
    return min(vals), max(vals)


def ordering_comparison(spec1: IndexSpectrum, spec2: IndexSpectrum,
                        class_correspondence=None, mode: str = "worst") -> OrderingComparison:
    """Range of ind2/ind1 over matched nonidentity classes.

    ``class_correspondence`` is one class map (list i -> j) or a list of
    candidate maps; ``None`` derives candidates from class data.  With
    several candidates ``mode="worst"`` widens to the extreme ratios over
    all of them; ``mode="best"`` picks the map with the largest c_lo, which
    is only sound when every candidate comes from a verified isomorphism.
    Transfer: count_spec2(X) <= count_spec1(X^(1/c_lo)).
    """
    verified = False
    if class_correspondence is None:
        if spec1.class_table is None or spec2.class_table is None:
            raise PushforwardError("spectra carry no class data to match")
        maps, _ = match_class_data(spec1.class_table, spec2.class_table)
    elif class_correspondence and isinstance(class_correspondence[0], int):
        maps = [list(class_correspondence)]
    else:
        maps = [list(m) for m in class_correspondence]
    if not maps:
        raise PushforwardError("no class correspondence between the spectra")
    pairs = [_ratios(spec1, spec2, m) for m in maps]
    if mode == "best":
        lo, hi = max(pairs, key=lambda p: (p[0], -p[1]))
        verified = True
    else:
        lo = min(p[0] for p in pairs)
        hi = max(p[1] for p in pairs)
    return OrderingComparison(lo, hi, len({tuple(m) for m in maps}) > 1, verified)


def compare_groups(G1: GeneratedGroup, G2: GeneratedGroup, spec1: IndexSpectrum | None = None,
                   spec2: IndexSpectrum | None = None) -> OrderingComparison | None:
    """Ordering comparison through verified isomorphisms, or None if none found.

    The spectra default to the index spectra of the groups; pass a
    pushforward spectrum to compare q_*ind instead.
    """
    from .invariants import index_spectrum

    maps, _ = isomorphism_class_maps(G1, G2)
    if not maps:
        return None
    spec1 = spec1 or index_spectrum(G1)
    spec2 = spec2 or index_spectrum(G2)
    return ordering_comparison(spec1, spec2, maps, mode="best")
