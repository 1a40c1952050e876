"""Exact permutation-group kernel.

Permutations compose left to right: ``p * q`` applies ``p`` first and then
``q``, so ``(p * q)(x) == q(p(x))``.  Points are 1-based in every public
interface and 0-based inside.

Groups keep a base and strong generating set built by deterministic
Schreier-Sims.  Groups small enough to enumerate also get an
:class:`ElementTable`, a numpy array of all elements indexed by their
position in the stabilizer chain, which backs the class and subgroup
computations.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

DEFAULT_ENUM_THRESHOLD = 2_000_000
NORMAL_SUBGROUP_CAP = 4096
DEFAULT_INDEX_CAP = 100_000
SAMPLE_SIZE = 4000


class PermError(ValueError):
    """Base class for invalid permutation or group input."""


class ParseError(PermError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class CycleSyntaxError(ParseError):
    pass


class RepeatedPointError(ParseError):
    pass


class PointRangeError(ParseError):
    pass


class NotNormalError(PermError):
    pass


class ThresholdExceeded(PermError):
    pass


# ---------------------------------------------------------------------------
# permutations


class Permutation:
    """A permutation of {1..degree}, immutable and hashable."""

    __slots__ = ("_img", "_hash")

    def __init__(self, images: Sequence[int]):
        img = tuple(int(x) - 1 for x in images)
        if sorted(img) != list(range(len(img))) or not img:
            raise PermError(f"not a permutation of 1..{len(img)}: {list(images)}")
        self._img = img
        self._hash = hash(img)

    @classmethod
    def _raw(cls, img: tuple) -> "Permutation":
        p = object.__new__(cls)
        p._img = img
        p._hash = hash(img)
        return p

    @classmethod
    def identity(cls, degree: int) -> "Permutation":
        return cls._raw(tuple(range(degree)))

    @classmethod
    def from_cycles(cls, cycles: Iterable[Sequence[int]], degree: int) -> "Permutation":
        img = list(range(degree))
        for cyc in cycles:
            for a, b in zip(cyc, list(cyc[1:]) + [cyc[0]]):
                img[a - 1] = b - 1
        return cls._raw(tuple(img))

    @property
    def degree(self) -> int:
        return len(self._img)

    @property
    def images(self) -> tuple:
        return tuple(x + 1 for x in self._img)

    def __call__(self, point: int) -> int:
        return self._img[point - 1] + 1

    def __mul__(self, other: "Permutation") -> "Permutation":
        o = other._img
        return Permutation._raw(tuple(o[i] for i in self._img))

    def inverse(self) -> "Permutation":
        inv = [0] * len(self._img)
        for i, j in enumerate(self._img):
            inv[j] = i
        return Permutation._raw(tuple(inv))

    def __pow__(self, k: int) -> "Permutation":
        if k < 0:
            return self.inverse() ** (-k)
        result = Permutation.identity(self.degree)
        base = self
        while k:
            if k & 1:
                result = result * base
            base = base * base
            k >>= 1
        return result

    def conjugate(self, x: "Permutation") -> "Permutation":
        """Return x^-1 * self * x, the relabelling of self by x."""
        xi = x._img
        img = [0] * len(xi)
        for i, j in enumerate(self._img):
            img[xi[i]] = xi[j]
        return Permutation._raw(tuple(img))

    def __eq__(self, other) -> bool:
        return isinstance(other, Permutation) and self._img == other._img

    def __lt__(self, other: "Permutation") -> bool:
        return self._img < other._img

    def __hash__(self) -> int:
        return self._hash

    def is_identity(self) -> bool:
        return all(i == j for i, j in enumerate(self._img))

    def cycles(self, include_fixed: bool = False) -> list:
        seen = [False] * len(self._img)
        out = []
        for start in range(len(self._img)):
            if seen[start]:
                continue
            cyc = [start + 1]
            seen[start] = True
            j = self._img[start]
            while j != start:
                cyc.append(j + 1)
                seen[j] = True
                j = self._img[j]
            if len(cyc) > 1 or include_fixed:
                out.append(tuple(cyc))
        return out

    def cycle_type(self) -> tuple:
        """Cycle lengths including fixed points, in decreasing order."""
        return tuple(sorted((len(c) for c in self.cycles(True)), reverse=True))

    def num_cycles(self) -> int:
        return len(self.cycles(True))

    def ind(self) -> int:
        return self.degree - self.num_cycles()

    def order(self) -> int:
        return math.lcm(*self.cycle_type())

    def support(self) -> list:
        return [i + 1 for i, j in enumerate(self._img) if i != j]

    def first_moved(self) -> int | None:
        for i, j in enumerate(self._img):
            if i != j:
                return i
        return None

    def __str__(self) -> str:
        cyc = self.cycles()
        if not cyc:
            return "()"
        return "".join("(" + ",".join(map(str, c)) + ")" for c in cyc)

    def __repr__(self) -> str:
        return f"Permutation({self}, degree={self.degree})"


def parse_cycles(text: str, degree: int) -> Permutation:
    """Parse "(1,2,3)(4,5)" style cycle notation at the given degree."""
    if degree < 1:
        raise PermError("degree must be positive")
    img = list(range(degree))
    used: dict[int, int] = {}
    i, n = 0, len(text)

    def skip(i):
        while i < n and text[i].isspace():
            i += 1
        return i

    i = skip(i)
    if i == n:
        raise CycleSyntaxError("empty input", i)
    first = True
    while True:
        i = skip(i)
        if i == n:
            break
        if text[i] != "(":
            raise CycleSyntaxError(f"expected '(' but found {text[i]!r}", i)
        open_pos = i
        i = skip(i + 1)
        if i < n and text[i] == ")":
            # "()" is only accepted as the whole input
            j = skip(i + 1)
            if not first or j != n:
                raise CycleSyntaxError("empty cycle inside a product", open_pos)
            return Permutation.identity(degree)
        points = []
        while True:
            i = skip(i)
            start = i
            while i < n and text[i].isdigit():
                i += 1
            if start == i:
                found = repr(text[i]) if i < n else "end of input"
                raise CycleSyntaxError(f"expected a point but found {found}", i)
            p = int(text[start:i])
            if not 1 <= p <= degree:
                raise PointRangeError(f"point {p} outside 1..{degree}", start)
            if p in used:
                raise RepeatedPointError(f"point {p} repeated", start)
            used[p] = start
            points.append(p)
            i = skip(i)
            if i == n:
                raise CycleSyntaxError("unterminated cycle", i)
            if text[i] == ",":
                i += 1
                continue
            if text[i] == ")":
                i += 1
                break
            raise CycleSyntaxError(f"expected ',' or ')' but found {text[i]!r}", i)
        for a, b in zip(points, points[1:] + points[:1]):
            img[a - 1] = b - 1
        first = False
    return Permutation._raw(tuple(img))


# ---------------------------------------------------------------------------
# stabilizer chains


@dataclass
class _Level:
    base_point: int
    gens: list
    orbit: list = field(default_factory=list)
    transversal: dict = field(default_factory=dict)

    def rebuild(self, n: int) -> None:
        b = self.base_point
        ident = tuple(range(n))
        self.orbit = [b]
        self.transversal = {b: ident}
        k = 0
        while k < len(self.orbit):
            p = self.orbit[k]
            u = self.transversal[p]
            for s in self.gens:
                q = s[p]
                if q not in self.transversal:
                    self.transversal[q] = tuple(s[x] for x in u)
                    self.orbit.append(q)
            k += 1


def _mul(p: tuple, q: tuple) -> tuple:
    return tuple(q[i] for i in p)


def _inv(p: tuple) -> tuple:
    inv = [0] * len(p)
    for i, j in enumerate(p):
        inv[j] = i
    return tuple(inv)


def _is_id(p: tuple) -> bool:
    return all(i == j for i, j in enumerate(p))


class BSGS:
    """Base and strong generating set from deterministic Schreier-Sims."""

    def __init__(self, n: int, gens: Sequence[tuple]):
        self.n = n
        gens = [g for g in dict.fromkeys(gens) if not _is_id(g)]
        base: list[int] = []
        for g in gens:
            if all(g[b] == b for b in base):
                base.append(next(i for i, j in enumerate(g) if i != j))
        self.strong = list(gens)
        self.levels = [_Level(b, []) for b in base]
        self._assign_gens()
        self._run()
        self._inverse_cache: dict = {}

    def _assign_gens(self) -> None:
        for i, lev in enumerate(self.levels):
            prefix = [l.base_point for l in self.levels[:i]]
            lev.gens = [s for s in self.strong if all(s[b] == b for b in prefix)]
            lev.rebuild(self.n)

    def _sift_from(self, g: tuple, start: int) -> tuple:
        for j in range(start, len(self.levels)):
            lev = self.levels[j]
            beta = g[lev.base_point]
            u = lev.transversal.get(beta)
            if u is None:
                return g, j
            g = _mul(g, _inv(u))
        return g, len(self.levels)

    def _run(self) -> None:
        i = len(self.levels) - 1
        while i >= 0:
            lev = self.levels[i]
            failed = False
            for p in list(lev.orbit):
                up = lev.transversal[p]
                for s in lev.gens:
                    q = s[p]
                    sch = _mul(_mul(up, s), _inv(lev.transversal[q]))
                    if _is_id(sch):
                        continue
                    h, j = self._sift_from(sch, i + 1)
                    if j < len(self.levels) or not _is_id(h):
                        if j == len(self.levels):
                            moved = next(a for a, b in enumerate(h) if a != b)
                            self.levels.append(_Level(moved, []))
                        self.strong.append(h)
                        for k in range(i + 1, j + 1):
                            self.levels[k].gens.append(h)
                            self.levels[k].rebuild(self.n)
                        failed = True
                        i = j
                        break
                if failed:
                    break
            if not failed:
                i -= 1

    @property
    def base(self) -> list:
        return [lev.base_point for lev in self.levels]

    @property
    def orbit_lengths(self) -> list:
        return [len(lev.orbit) for lev in self.levels]

    def order(self) -> int:
        return math.prod(self.orbit_lengths)

    def contains(self, g: tuple) -> bool:
        h, j = self._sift_from(g, 0)
        return j == len(self.levels) and _is_id(h)

    def random_element(self, rng: random.Random) -> tuple:
        g = tuple(range(self.n))
        for lev in reversed(self.levels):
            u = lev.transversal[lev.orbit[rng.randrange(len(lev.orbit))]]
            g = _mul(g, u)
        return g

    def coset_canonical(self, g: tuple) -> tuple:
        """Canonical element of the right coset H*g for this chain's group H."""
        for lev in self.levels:
            best = min(lev.orbit, key=lambda p: g[p])
            g = _mul(lev.transversal[best], g)
        return g


# ---------------------------------------------------------------------------
# element tables


class ElementTable:
    """All elements of an enumerable group as rows of a numpy array.

    Row r holds the 0-based images of the element with rank r.  The rank is
    read off the stabilizer chain, so ``rank`` is a vectorized sift.
    """

    def __init__(self, bsgs: BSGS):
        n = bsgs.n
        self.n = n
        self.dtype = np.uint8 if n <= 255 else np.int16
        self.levels = []
        for lev in bsgs.levels:
            pos = np.full(n, -1, dtype=np.int64)
            pos[lev.orbit] = np.arange(len(lev.orbit))
            U = np.array([lev.transversal[p] for p in lev.orbit], dtype=np.int64)
            Uinv = np.argsort(U, axis=1)
            self.levels.append((lev.base_point, pos, U, Uinv))
        strides = []
        s = 1
        for _, _, U, _ in self.levels:
            strides.append(s)
            s *= len(U)
        self.strides = strides
        self.order = s
        E = np.arange(n, dtype=np.int64)[None, :]
        for _, _, U, _ in reversed(self.levels):
            P = len(U)
            E = U[np.arange(P)[None, :, None], E[:, None, :]].reshape(-1, n)
        self.perms = E.astype(self.dtype)

    def rank(self, batch: np.ndarray) -> np.ndarray:
        """Ranks of the given rows, -1 for rows outside the group."""
        g = np.asarray(batch, dtype=np.int64)
        single = g.ndim == 1
        if single:
            g = g[None, :]
        rank = np.zeros(len(g), dtype=np.int64)
        ok = np.ones(len(g), dtype=bool)
        for (b, pos, _, Uinv), stride in zip(self.levels, self.strides):
            p = pos[g[:, b]]
            ok &= p >= 0
            p = np.where(p >= 0, p, 0)
            rank += p * stride
            g = Uinv[p[:, None], g]
        ok &= (g == np.arange(self.n)[None, :]).all(axis=1)
        rank[~ok] = -1
        return rank[0] if single else rank

    def rank_of(self, p: Permutation) -> int:
        return int(self.rank(np.array(p._img)))

    def perm(self, r: int) -> Permutation:
        return Permutation._raw(tuple(int(x) for x in self.perms[r]))

    def compose(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Ranks of a*b (a first) for equal-length rank arrays."""
        A = self.perms[np.atleast_1d(a)].astype(np.int64)
        B = self.perms[np.atleast_1d(b)].astype(np.int64)
        return self.rank(np.take_along_axis(B, A, axis=1))

    def right_multiply(self, ranks: np.ndarray, x: Permutation) -> np.ndarray:
        xi = np.array(x._img, dtype=np.int64)
        return self.rank(xi[self.perms[ranks].astype(np.int64)])

    def conjugation_map(self, x: Permutation) -> np.ndarray:
        """rank(g) -> rank(x^-1 g x) for every element g."""
        xi = np.array(x._img, dtype=np.int64)
        xinv = np.argsort(xi)
        E = self.perms.astype(np.int64)
        return self.rank(xi[E[:, xinv]])

    def inverse_map(self) -> np.ndarray:
        return self.rank(np.argsort(self.perms, axis=1))

    def num_cycles(self, ranks: np.ndarray | None = None) -> np.ndarray:
        E = self.perms if ranks is None else self.perms[ranks]
        E = E.astype(np.int64)
        n = self.n
        cur = np.broadcast_to(np.arange(n), E.shape).copy()
        low = cur.copy()
        for _ in range(n - 1):
            cur = np.take_along_axis(E, cur, axis=1)
            np.minimum(low, cur, out=low)
        return (low == np.arange(n)[None, :]).sum(axis=1)

    def closure(self, start: np.ndarray | None, gens: Sequence[Permutation],
                new_gens: Sequence[Permutation] | None = None) -> np.ndarray:
        """Mask of the subgroup generated by a closed mask and new generators.

        ``start`` must be the mask of a subgroup generated by ``gens``.
        """
        mask = np.zeros(self.order, dtype=bool)
        if start is None:
            mask[0] = True
        else:
            mask |= start
        new_gens = list(new_gens or [])
        all_gens = list(gens) + new_gens
        if new_gens:
            base = np.flatnonzero(mask)
            frontier = np.concatenate([self.right_multiply(base, g) for g in new_gens])
        else:
            frontier = np.flatnonzero(mask) if start is None else np.array([], dtype=np.int64)
            if start is None:
                frontier = np.concatenate([self.right_multiply(frontier, g) for g in all_gens]) \
                    if all_gens else frontier
        while len(frontier):
            frontier = np.unique(frontier)
            frontier = frontier[~mask[frontier]]
            if not len(frontier):
                break
            mask[frontier] = True
            frontier = np.concatenate([self.right_multiply(frontier, g) for g in all_gens])
        return mask


# ---------------------------------------------------------------------------
# groups


class GeneratedGroup:
    """A permutation group given by generators."""

    def __init__(self, generators: Sequence[Permutation], degree: int | None = None,
                 enum_threshold: int = DEFAULT_ENUM_THRESHOLD, name: str | None = None):
        gens = list(generators)
        if degree is None:
            if not gens:
                raise PermError("need a degree or at least one generator")
            degree = gens[0].degree
        for g in gens:
            if g.degree != degree:
                raise PermError(f"mixed degrees: {g.degree} and {degree}")
        self.degree = degree
        self.generators = tuple(gens) if gens else (Permutation.identity(degree),)
        self.enum_threshold = enum_threshold
        self.name = name

    def __repr__(self) -> str:
        label = self.name or f"<{len(self.generators)} gens>"
        return f"GeneratedGroup({label}, degree={self.degree})"

    @cached_property
    def bsgs(self) -> BSGS:
        return BSGS(self.degree, [g._img for g in self.generators])

    @cached_property
    def order(self) -> int:
        return self.bsgs.order()

    def contains(self, p: Permutation) -> bool:
        return p.degree == self.degree and self.bsgs.contains(p._img)

    __contains__ = contains

    def is_enumerable(self) -> bool:
        return self.order <= self.enum_threshold

    @cached_property
    def table(self) -> ElementTable:
        if not self.is_enumerable():
            raise ThresholdExceeded(
                f"order {self.order} exceeds the enumeration threshold {self.enum_threshold}")
        return ElementTable(self.bsgs)

    def elements(self) -> Iterable[Permutation]:
        t = self.table
        return (t.perm(r) for r in range(t.order))

    def identity(self) -> Permutation:
        return Permutation.identity(self.degree)

    def random_element(self, rng: random.Random) -> Permutation:
        return Permutation._raw(self.bsgs.random_element(rng))

    def subgroup(self, gens: Sequence[Permutation], name: str | None = None) -> "GeneratedGroup":
        return GeneratedGroup(gens, self.degree, self.enum_threshold, name)

    def is_transitive(self) -> bool:
        return len(orbits(self, range(1, self.degree + 1))[0]) == self.degree

    def is_subgroup_of(self, other: "GeneratedGroup") -> bool:
        return all(other.contains(g) for g in self.generators)

    def same_group(self, other: "GeneratedGroup") -> bool:
        return (self.degree == other.degree and self.order == other.order
                and self.is_subgroup_of(other))

    def is_trivial(self) -> bool:
        return self.order == 1

    @cached_property
    def is_giant(self) -> str | None:
        """'S' or 'A' when this is the full symmetric or alternating group."""
        n = self.degree
        if self.order == math.factorial(n):
            return "S"
        if n >= 3 and 2 * self.order == math.factorial(n):
            return "A"
        return None


def group_from_generators(gens: Sequence[Permutation], **kw) -> GeneratedGroup:
    if not gens:
        raise PermError("at least one generator is required")
    return GeneratedGroup(gens, **kw)


def symmetric_group(n: int) -> GeneratedGroup:
    if n == 1:
        return GeneratedGroup([Permutation.identity(1)], 1, name="S1")
    gens = [Permutation.from_cycles([tuple(range(1, n + 1))], n)]
    if n > 2:
        gens.append(Permutation.from_cycles([(1, 2)], n))
    return GeneratedGroup(gens, n, name=f"S{n}")


def alternating_group(n: int) -> GeneratedGroup:
    if n < 3:
        return GeneratedGroup([Permutation.identity(n)], n, name=f"A{n}")
    gens = [Permutation.from_cycles([(1, 2, k)], n) for k in range(3, n + 1)]
    return GeneratedGroup(gens, n, name=f"A{n}")


def cyclic_group(n: int) -> GeneratedGroup:
    return GeneratedGroup([Permutation.from_cycles([tuple(range(1, n + 1))], n)
                           if n > 1 else Permutation.identity(1)], n, name=f"C{n}")


# ---------------------------------------------------------------------------
# orbits


def orbits(G: GeneratedGroup, on: Iterable[int]) -> list:
    """Orbit partition of the given points under the generators of G."""
    points = list(dict.fromkeys(on))
    for p in points:
        if not 1 <= p <= G.degree:
            raise PermError(f"point {p} outside 1..{G.degree}")
    remaining = set(points)
    out = []
    for p in points:
        if p not in remaining:
            continue
        orb = [p]
        remaining.discard(p)
        k = 0
        while k < len(orb):
            x = orb[k]
            for g in G.generators:
                y = g(x)
                if y in remaining:
                    remaining.discard(y)
                    orb.append(y)
            k += 1
        out.append(sorted(orb))
    return out


# ---------------------------------------------------------------------------
# conjugacy classes


@dataclass
class ClassTable:
    representatives: list
    sizes: list
    orders: list
    power_maps: list
    class_of_rank: np.ndarray | None = None
    complete: bool = True
    certified: bool = True
    group: GeneratedGroup | None = None
    method: str = "enumeration"

    def __len__(self) -> int:
        return len(self.representatives)

    def class_of(self, p: Permutation) -> int:
        """Class index of p; exact for enumerated and giant tables."""
        if self.class_of_rank is not None:
            r = self.group.table.rank_of(p)
            if r < 0:
                raise PermError(f"{p} is not in the group")
            return int(self.class_of_rank[r])
        if self.method == "giant":
            return _giant_class_of(self, p)
        ct = p.cycle_type()
        hits = [i for i, r in enumerate(self.representatives) if r.cycle_type() == ct]
        if len(hits) == 1:
            return hits[0]
        raise PermError("class lookup is ambiguous in a sampled table")

    def class_mask(self, i: int) -> np.ndarray:
        return self.class_of_rank == i


def conjugacy_classes(G: GeneratedGroup) -> ClassTable:
    """Conjugacy classes with power maps.

    Enumerable groups get an exact table.  Symmetric and alternating
    groups beyond the threshold get the exact combinatorial table.  Other
    large groups get a sampled table flagged incomplete and uncertified.
    """
    cached = getattr(G, "_class_table", None)
    if cached is not None:
        return cached
    if G.is_enumerable():
        ct = _classes_enumerated(G)
    elif G.is_giant:
        ct = _classes_giant(G)
    else:
        ct = _classes_sampled(G)
    G._class_table = ct
    return ct


def _classes_enumerated(G: GeneratedGroup) -> ClassTable:
    t = G.table
    N = t.order
    src, dst = [], []
    for x in G.generators:
        src.append(np.arange(N))
        dst.append(t.conjugation_map(x))
    if N == 1:
        labels = np.zeros(1, dtype=np.int64)
    else:
        src_a = np.concatenate(src)
        dst_a = np.concatenate(dst)
        graph = coo_matrix((np.ones(len(src_a), dtype=np.int8), (src_a, dst_a)), shape=(N, N))
        _, labels = connected_components(graph, directed=True, connection="weak")
    # relabel classes by smallest member rank
    first = np.full(labels.max() + 1, N, dtype=np.int64)
    np.minimum.at(first, labels, np.arange(N))
    order = np.argsort(first)
    relabel = np.empty_like(order)
    relabel[order] = np.arange(len(order))
    class_of = relabel[labels]
    sizes = np.bincount(class_of).tolist()
    reps = [t.perm(int(first[c])) for c in order]
    orders = [r.order() for r in reps]
    power_maps = []
    for r, o in zip(reps, orders):
        pm = {}
        for j in range(1, max(o, 1) + 1):
            if math.gcd(j, o) == 1:
                pm[j] = int(class_of[t.rank_of(r ** j)])
        power_maps.append(pm)
    return ClassTable(reps, sizes, orders, power_maps, class_of, True, True, G, "enumeration")


def _partitions(n: int, max_part: int | None = None):
    if max_part is None:
        max_part = n
    if n == 0:
        yield ()
        return
    for k in range(min(n, max_part), 0, -1):
        for rest in _partitions(n - k, k):
            yield (k,) + rest


def _perm_of_type(shape: tuple, n: int) -> Permutation:
    cycles, start = [], 1
    for k in shape:
        cycles.append(tuple(range(start, start + k)))
        start += k
    return Permutation.from_cycles([c for c in cycles if len(c) > 1], n)


def _centralizer_order_sym(shape: tuple) -> int:
    out = 1
    for k in set(shape):
        m = shape.count(k)
        out *= k ** m * math.factorial(m)
    return out


def _cycle_aligning_perm(p: Permutation, q: Permutation) -> Permutation:
    """Some x with x^-1 p x = q (p and q of equal cycle type)."""
    cp = sorted(p.cycles(True), key=len)
    cq = sorted(q.cycles(True), key=len)
    img = [0] * p.degree
    for a, b in zip(cp, cq):
        for u, v in zip(a, b):
            img[u - 1] = v
    return Permutation(img)


def _sign(p: Permutation) -> int:
    return -1 if (p.degree - p.num_cycles()) % 2 else 1


def _classes_giant(G: GeneratedGroup) -> ClassTable:
    n = G.degree
    alt = G.is_giant == "A"
    reps, sizes, keys = [], [], []
    for shape in _partitions(n):
        rep = _perm_of_type(shape, n)
        if alt and _sign(rep) < 0:
            continue
        size = math.factorial(n) // _centralizer_order_sym(shape)
        splits = alt and len(set(shape)) == len(shape) and all(k % 2 for k in shape)
        if splits:
            # conjugate by a transposition to reach the other half
            other = rep.conjugate(Permutation.from_cycles([(1, 2)], n))
            reps += [rep, other]
            sizes += [size // 2, size // 2]
            keys += [(shape, 0), (shape, 1)]
        else:
            reps.append(rep)
            sizes.append(size)
            keys.append((shape, None))
    order_idx = sorted(range(len(reps)), key=lambda i: (0 if reps[i].is_identity() else 1, i))
    reps = [reps[i] for i in order_idx]
    sizes = [sizes[i] for i in order_idx]
    ct = ClassTable(reps, sizes, [r.order() for r in reps], [], None, True, True, G, "giant")
    for r, o in zip(ct.representatives, ct.orders):
        ct.power_maps.append({j: _giant_class_of(ct, r ** j)
                              for j in range(1, o + 1) if math.gcd(j, o) == 1})
    return ct


def _giant_class_of(ct: ClassTable, p: Permutation) -> int:
    shape = p.cycle_type()
    hits = [i for i, r in enumerate(ct.representatives) if r.cycle_type() == shape]
    if len(hits) == 1:
        return hits[0]
    # split class of the alternating group: p is conjugate to the first rep
    # by an even permutation iff the aligning permutation has the right sign
    x = _cycle_aligning_perm(ct.representatives[hits[0]], p)
    return hits[0] if _sign(x) > 0 else hits[1]


def _classes_sampled(G: GeneratedGroup, samples: int = SAMPLE_SIZE) -> ClassTable:
    rng = random.Random(0x5EED ^ G.degree)
    seen: dict = {}
    ident = G.identity()
    seen[ident.cycle_type()] = [ident, 0]
    for g in G.generators:
        seen.setdefault(g.cycle_type(), [g, 0])
    for _ in range(samples):
        g = G.random_element(rng)
        entry = seen.setdefault(g.cycle_type(), [g, 0])
        entry[1] += 1
    keys = sorted(seen, key=lambda k: (k != (1,) * G.degree, k))
    reps = [seen[k][0] for k in keys]
    sizes = [max(1, round(seen[k][1] * G.order / samples)) for k in keys]
    sizes[0] = 1
    ct = ClassTable(reps, sizes, [r.order() for r in reps], [], None, False, False, G, "sampled")
    index = {k: i for i, k in enumerate(keys)}
    for r, o in zip(reps, ct.orders):
        pm = {}
        for j in range(1, o + 1):
            if math.gcd(j, o) == 1:
                pm[j] = index.get((r ** j).cycle_type(), -1)
        ct.power_maps.append(pm)
    return ct


def fingerprint(G: GeneratedGroup) -> tuple:
    ct = conjugacy_classes(G)
    pairs = sorted((r.cycle_type(), s) for r, s in zip(ct.representatives, ct.sizes))
    return (G.degree, G.order, tuple(pairs))


def abstract_fingerprint(G: GeneratedGroup) -> tuple:
    """Representation-independent data: order and (element order, class size, power orbit size)."""
    ct = conjugacy_classes(G)
    rows = []
    for i, (o, s) in enumerate(zip(ct.orders, ct.sizes)):
        orbit = set(ct.power_maps[i].values())
        rows.append((o, s, len(orbit)))
    return (G.order, tuple(sorted(rows)))


# ---------------------------------------------------------------------------
# normal closures and normal subgroups


def normal_closure(G: GeneratedGroup, S: Iterable[Permutation]) -> GeneratedGroup:
    """Smallest normal subgroup of G containing S."""
    S = list(S)
    for s in S:
        if not G.contains(s):
            raise PermError(f"{s} is not an element of the group")
    gens = [s for s in dict.fromkeys(S) if not s.is_identity()]
    if not gens:
        return G.subgroup([G.identity()])
    if G.is_enumerable():
        t = G.table
        mask = None
        chosen: list = []
        queue = list(gens)
        while queue:
            s = queue.pop(0)
            r = t.rank_of(s)
            if mask is not None and mask[r]:
                continue
            mask = t.closure(mask, chosen, [s])
            chosen.append(s)
            queue.extend(s.conjugate(x) for x in G.generators)
        H = G.subgroup(chosen)
        H._mask = mask
        return H
    H = G.subgroup(gens)
    queue = list(gens)
    while queue:
        s = queue.pop(0)
        for x in G.generators:
            c = s.conjugate(x)
            if not H.contains(c):
                gens.append(c)
                H = G.subgroup(gens)
                queue.append(c)
    return H


def subgroup_mask(G: GeneratedGroup, H: GeneratedGroup) -> np.ndarray:
    """Boolean mask over the element table of G for a subgroup H."""
    m = getattr(H, "_mask", None)
    if m is not None and len(m) == G.table.order:
        return m
    t = G.table
    m = t.closure(None, H.generators)
    H._mask = m
    return m


def _group_from_mask(G: GeneratedGroup, mask: np.ndarray) -> GeneratedGroup:
    """Generators for the subgroup with the given element mask."""
    t = G.table
    members = np.flatnonzero(mask)
    cur = np.zeros(t.order, dtype=bool)
    cur[0] = True
    gens: list = []
    cur_mask = None
    for r in members:
        if cur[r]:
            continue
        p = t.perm(int(r))
        cur_mask = t.closure(cur_mask, gens, [p])
        cur = cur_mask
        gens.append(p)
        if cur.sum() == len(members):
            break
    H = G.subgroup(gens or [G.identity()])
    H._mask = mask.copy()
    return H


class NormalSubgroupList(list):
    overflow: bool = False


def normal_subgroups(G: GeneratedGroup, cap: int = NORMAL_SUBGROUP_CAP) -> NormalSubgroupList:
    """All normal subgroups as joins of normal closures of classes."""
    ct = conjugacy_classes(G)
    if G.is_enumerable():
        return _normal_subgroups_masks(G, ct, cap)
    return _normal_subgroups_bsgs(G, ct, cap)


def _normal_subgroups_masks(G, ct, cap):
    t = G.table
    found: dict = {}
    triv = np.zeros(t.order, dtype=bool)
    triv[0] = True
    found[triv.tobytes()] = (triv, [])
    closures = []
    for i in range(1, len(ct)):
        members = np.flatnonzero(ct.class_of_rank == i)
        mask, gens = None, []
        for r in members:
            if mask is not None and mask[r]:
                continue
            p = t.perm(int(r))
            mask = t.closure(mask, gens, [p])
            gens.append(p)
        key = mask.tobytes()
        if key not in found:
            found[key] = (mask, gens)
            closures.append((mask, gens))
    queue = list(found.values())
    joins = 0
    overflow = False
    while queue:
        A, agens = queue.pop(0)
        for C, cgens in closures:
            if not (C & ~A).any():
                continue
            joins += 1
            if joins > cap:
                overflow = True
                break
            J = t.closure(A, agens, cgens)
            key = J.tobytes()
            if key not in found:
                found[key] = (J, agens + cgens)
                queue.append(found[key])
        if overflow:
            break
    masks = sorted((m for m, _ in found.values()), key=lambda m: (int(m.sum()), m.tobytes()[::-1]))
    out = NormalSubgroupList(_group_from_mask(G, m) for m in masks)
    out.overflow = overflow
    return out


def _normal_subgroups_bsgs(G, ct, cap):
    found: list = [G.subgroup([G.identity()])]

    def known(H):
        return any(K.order == H.order and H.is_subgroup_of(K) for K in found)

    closures = []
    for r in ct.representatives[1:]:
        N = normal_closure(G, [r])
        if not known(N):
            found.append(N)
            closures.append(N)
    queue = list(found)
    joins, overflow = 0, False
    while queue and not overflow:
        A = queue.pop(0)
        for C in closures:
            if C.is_subgroup_of(A):
                continue
            joins += 1
            if joins > cap:
                overflow = True
                break
            J = G.subgroup(list(A.generators) + list(C.generators))
            if not known(J):
                found.append(J)
                queue.append(J)
    out = NormalSubgroupList(sorted(found, key=lambda H: H.order))
    out.overflow = overflow or not ct.complete
    return out


def is_normal(G: GeneratedGroup, H: GeneratedGroup) -> bool:
    return all(H.contains(h.conjugate(x)) for h in H.generators for x in G.generators)


# ---------------------------------------------------------------------------
# coset actions and quotients


@dataclass
class CosetAction:
    group: GeneratedGroup
    representatives: list
    index_of: Callable

    @property
    def degree(self) -> int:
        return self.group.degree


def _coset_action(G: GeneratedGroup, H: GeneratedGroup, cap: int) -> CosetAction:
    chain = H.bsgs
    n = G.degree
    start = chain.coset_canonical(tuple(range(n)))
    index = {start: 0}
    reps = [start]
    k = 0
    while k < len(reps):
        r = reps[k]
        for x in G.generators:
            c = chain.coset_canonical(_mul(r, x._img))
            if c not in index:
                if len(reps) >= cap:
                    raise ThresholdExceeded(f"coset index exceeds {cap}")
                index[c] = len(reps)
                reps.append(c)
        k += 1
    m = len(reps)
    gens = []
    for x in G.generators:
        img = [0] * m
        for i, r in enumerate(reps):
            img[i] = index[chain.coset_canonical(_mul(r, x._img))]
        gens.append(Permutation._raw(tuple(img)))
    A = GeneratedGroup(gens, m, G.enum_threshold)

    def index_of(g: Permutation) -> int:
        return index[chain.coset_canonical(g._img)]

    return CosetAction(A, [Permutation._raw(r) for r in reps], index_of)


def coset_action(G: GeneratedGroup, H: GeneratedGroup, cap: int = DEFAULT_INDEX_CAP) -> GeneratedGroup:
    """Action of G on the right cosets Hg; the kernel is the core of H."""
    if not H.is_subgroup_of(G):
        raise PermError("H is not a subgroup of G")
    if G.order // H.order > cap:
        raise ThresholdExceeded(f"index {G.order // H.order} exceeds {cap}")
    return _coset_action(G, H, cap).group


@dataclass
class Quotient:
    group: GeneratedGroup
    coset_map: Callable
    coset_representatives: list
    kernel: GeneratedGroup

    def labels(self, G: GeneratedGroup) -> np.ndarray:
        """Coset index (0-based) of every element of an enumerable G."""
        t = G.table
        N = t.order
        T = self.kernel
        src, dst = [], []
        for x in T.generators:
            src.append(np.arange(N))
            dst.append(t.right_multiply(np.arange(N), x))
        if src:
            s = np.concatenate(src)
            d = np.concatenate(dst)
            graph = coo_matrix((np.ones(len(s), dtype=np.int8), (s, d)), shape=(N, N))
            _, comp = connected_components(graph, directed=True, connection="weak")
        else:
            comp = np.arange(N)
        first = np.full(comp.max() + 1, N, dtype=np.int64)
        np.minimum.at(first, comp, np.arange(N))
        lab = np.array([self.coset_map(t.perm(int(f))) for f in first], dtype=np.int64)
        return lab[comp]


def quotient_regular(G: GeneratedGroup, T: GeneratedGroup, cap: int = DEFAULT_INDEX_CAP) -> Quotient:
    """G/T in its regular representation, with the coset map."""
    if not T.is_subgroup_of(G) or not is_normal(G, T):
        raise NotNormalError("T is not a normal subgroup of G")
    if G.order // T.order > cap:
        raise ThresholdExceeded(f"index {G.order // T.order} exceeds {cap}")
    act = _coset_action(G, T, cap)

    def coset_map(g: Permutation) -> int:
        return act.index_of(g)

    return Quotient(act.group, coset_map, act.representatives, T)


def stabilizer(G: GeneratedGroup, point: int) -> GeneratedGroup:
    """Point stabilizer via Schreier generators, reduced against a growing chain."""
    n = G.degree
    p = point - 1
    trans = {p: tuple(range(n))}
    orbit = [p]
    k = 0
    while k < len(orbit):
        q = orbit[k]
        for s in G.generators:
            r = s._img[q]
            if r not in trans:
                trans[r] = _mul(trans[q], s._img)
                orbit.append(r)
        k += 1
    gens: list = []
    H = None
    for q in orbit:
        for s in G.generators:
            sch = _mul(_mul(trans[q], s._img), _inv(trans[s._img[q]]))
            if _is_id(sch):
                continue
            if H is not None and H.bsgs.contains(sch):
                continue
            gens.append(Permutation._raw(sch))
            H = G.subgroup(gens)
            if H.order * len(orbit) == G.order:
                return H
    return H if H is not None else G.subgroup([G.identity()])


def setwise_stabilizer(G: GeneratedGroup, block: Iterable[int]) -> GeneratedGroup:
    """Stabilizer of a block of imprimitivity (a block of some system)."""
    block = frozenset(block)
    n = G.degree
    # orbit of the block under G, with transversal
    key0 = tuple(sorted(block))
    trans = {key0: tuple(range(n))}
    orbit = [key0]
    k = 0
    while k < len(orbit):
        B = orbit[k]
        for s in G.generators:
            C = tuple(sorted(s._img[x - 1] + 1 for x in B))
            if C not in trans:
                trans[C] = _mul(trans[B], s._img)
                orbit.append(C)
        k += 1
    gens: list = []
    H = None
    for B in orbit:
        for s in G.generators:
            C = tuple(sorted(s._img[x - 1] + 1 for x in B))
            sch = _mul(_mul(trans[B], s._img), _inv(trans[C]))
            if _is_id(sch) or (H is not None and H.bsgs.contains(sch)):
                continue
            gens.append(Permutation._raw(sch))
            H = G.subgroup(gens)
            if H.order * len(orbit) == G.order:
                return H
    return H if H is not None else G.subgroup([G.identity()])


def restrict(G: GeneratedGroup, points: Sequence[int]) -> GeneratedGroup:
    """Action of a group on an invariant set of points, relabelled 1..len(points)."""
    pts = list(points)
    pos = {p: i for i, p in enumerate(pts)}
    gens = []
    for g in G.generators:
        gens.append(Permutation._raw(tuple(pos[g(p)] for p in pts)))
    return GeneratedGroup(gens, len(pts), G.enum_threshold)


# ---------------------------------------------------------------------------
# wreath products and block systems


def wreath(A: GeneratedGroup, B: GeneratedGroup) -> GeneratedGroup:
    """Imprimitive wreath product A wr B of degree a*m."""
    a, m = A.degree, B.degree
    n = a * m
    gens = []
    for rep in orbits(B, range(1, m + 1)):
        block = rep[0] - 1
        for g in A.generators:
            img = list(range(n))
            for i in range(a):
                img[block * a + i] = block * a + g._img[i]
            gens.append(Permutation._raw(tuple(img)))
    for h in B.generators:
        img = [0] * n
        for j in range(m):
            for i in range(a):
                img[j * a + i] = h._img[j] * a + i
        gens.append(Permutation._raw(tuple(img)))
    gens = [g for g in gens if not g.is_identity()] or [Permutation.identity(n)]
    return GeneratedGroup(gens, n, max(A.enum_threshold, B.enum_threshold))


@dataclass
class BlockSystem:
    blocks: tuple
    block_action: GeneratedGroup

    @property
    def block_size(self) -> int:
        return len(self.blocks[0])

    @property
    def num_blocks(self) -> int:
        return len(self.blocks)


def _minimal_blocks(G: GeneratedGroup, seed: Iterable[int]) -> list:
    """Atkinson's union-find: finest block system with all of seed in one block."""
    n = G.degree
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    seed = [s - 1 for s in seed]
    queue = []
    for s in seed[1:]:
        ra, rb = find(seed[0]), find(s)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
            queue.append((seed[0], s))
    while queue:
        x, y = queue.pop()
        for g in G.generators:
            gx, gy = find(g._img[x]), find(g._img[y])
            if gx != gy:
                parent[max(gx, gy)] = min(gx, gy)
                queue.append((gx, gy))
    classes: dict = {}
    for i in range(n):
        classes.setdefault(find(i), []).append(i + 1)
    return sorted(tuple(c) for c in classes.values())


def _make_system(G: GeneratedGroup, blocks: list) -> BlockSystem:
    where = {}
    for k, B in enumerate(blocks):
        for p in B:
            where[p] = k
    gens = [Permutation._raw(tuple(where[g(B[0])] for B in blocks)) for g in G.generators]
    return BlockSystem(tuple(blocks), GeneratedGroup(gens, len(blocks), G.enum_threshold))


def block_systems(G: GeneratedGroup, minimal_only: bool = False) -> list:
    """All nontrivial block systems of a transitive group.

    Systems are sorted by block size.  With ``minimal_only`` only the
    systems with no nontrivial refinement are returned.
    """
    if not G.is_transitive():
        raise PermError("block systems need a transitive group")
    n = G.degree
    found: dict = {}
    for j in range(2, n + 1):
        bl = _minimal_blocks(G, [1, j])
        if len(bl[0]) < n:
            found[tuple(bl)] = bl
    # every block containing 1 is a join of the minimal ones
    changed = True
    while changed:
        changed = False
        keys = list(found)
        for x in keys:
            for y in keys:
                bx = next(b for b in found[x] if 1 in b)
                by = next(b for b in found[y] if 1 in b)
                seed = sorted(set(bx) | set(by))
                bl = _minimal_blocks(G, seed)
                if len(bl[0]) < n and tuple(bl) not in found:
                    found[tuple(bl)] = bl
                    changed = True
    systems = sorted(found.values(), key=lambda bl: (len(bl[0]), bl))
    if minimal_only:
        def refines(fine, coarse):
            return all(any(set(f) <= set(c) for c in coarse) for f in fine)
        systems = [s for s in systems
                   if not any(o is not s and len(o[0]) < len(s[0]) and refines(o, s) for o in systems)]
    return [_make_system(G, bl) for bl in systems]


def is_primitive(G: GeneratedGroup) -> bool:
    if not G.is_transitive():
        return False
    n = G.degree
    for j in range(2, n + 1):
        if len(_minimal_blocks(G, [1, j])[0]) < n:
            return False
    return True


# ---------------------------------------------------------------------------
# series and predicates


def commutator(x: Permutation, y: Permutation) -> Permutation:
    return x.inverse() * y.inverse() * x * y


def derived_subgroup(G: GeneratedGroup) -> GeneratedGroup:
    gens = G.generators
    comms = [commutator(x, y) for i, x in enumerate(gens) for y in gens[i + 1:]]
    return normal_closure(G, comms)


def commutator_subgroup(G: GeneratedGroup, N: GeneratedGroup) -> GeneratedGroup:
    """[N, G] for a normal subgroup N."""
    comms = [commutator(x, g) for x in N.generators for g in G.generators]
    return normal_closure(G, comms)


def center(G: GeneratedGroup) -> GeneratedGroup | None:
    """Center of an enumerable group (None when G is too large)."""
    if G.is_giant and G.degree >= 3:
        return G.subgroup([G.identity()])
    if not G.is_enumerable():
        return None
    t = G.table
    mask = np.ones(t.order, dtype=bool)
    for x in G.generators:
        mask &= t.conjugation_map(x) == np.arange(t.order)
    return _group_from_mask(G, mask)


@dataclass
class StructureInfo:
    is_abelian: bool
    is_nilpotent: bool
    is_solvable: bool
    center: GeneratedGroup | None
    derived_series: list
    lower_central_series: list


def structure_predicates(G: GeneratedGroup) -> StructureInfo:
    derived = [G]
    while True:
        D = derived_subgroup(derived[-1]) if derived[-1].order > 1 else derived[-1]
        if D.order == derived[-1].order:
            break
        derived.append(D)
    lower = [G]
    while True:
        L = commutator_subgroup(G, lower[-1]) if lower[-1].order > 1 else lower[-1]
        if L.order == lower[-1].order:
            break
        lower.append(L)
    abelian = all(x * y == y * x for x in G.generators for y in G.generators)
    return StructureInfo(
        is_abelian=abelian,
        is_nilpotent=lower[-1].order == 1,
        is_solvable=derived[-1].order == 1,
        center=center(G),
        derived_series=derived,
        lower_central_series=lower,
    )


def is_abelian(G: GeneratedGroup) -> bool:
    return all(x * y == y * x for x in G.generators for y in G.generators)
