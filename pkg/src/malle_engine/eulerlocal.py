"""Tame Euler factors of the local series attached to (G, T).

For an abelian normal T of G, a tame prime whose Frobenius lands in the
coset yT and whose cyclotomic character is j contributes

    1 + sum_d #{tau in A_d : (y tau y^-1)^j = tau} p^(-ds),

with A_d the elements of T of index d.  The leading pole of the series sits
at s = 1/a(T) with order the number of orbits on A_{a(T)}.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

import numpy as np

from . import permcore as pc
from .invariants import ModuleData
from .permcore import GeneratedGroup, Permutation


class EulerError(ValueError):
    pass


class InvariantViolation(RuntimeError):
    """An identity that must hold for abelian T failed."""


@dataclass(frozen=True)
class TameFactor:
    coefficients: dict
    coset: Permutation
    j: int
    exponent: int

    def __post_init__(self):
        if self.coefficients.get(0) != 1:
            raise InvariantViolation("tame factor must have constant term 1")

    def coefficient(self, d: int) -> int:
        return self.coefficients.get(d, 0)

    def total(self) -> int:
        return sum(self.coefficients.values())

    def __str__(self) -> str:
        terms = ["1"] + [f"{c} q^-{d}s" for d, c in sorted(self.coefficients.items()) if d and c]
        return " + ".join(terms)


@dataclass(frozen=True)
class OrbitDecomposition:
    action: str
    orbits: tuple
    sizes: tuple
    group_order: int
    burnside_sum: int

    @property
    def count(self) -> int:
        return len(self.orbits)

    @property
    def burnside_holds(self) -> bool:
        return self.burnside_sum == self.count * self.group_order


def _module(G: GeneratedGroup, T: GeneratedGroup) -> ModuleData:
    if not T.is_enumerable():
        raise EulerError("T is too large to enumerate")
    return ModuleData(G, T)


def minimal_index_set(G: GeneratedGroup, T: GeneratedGroup, d: int) -> list:
    """A_d: the elements of T of index d, sorted."""
    M = _module(G, T)
    return [M.table.perm(int(r)) for r in np.flatnonzero(M.ind == d)]


def twisted_fixed_points(A: list, y: Permutation, j: int, exponent: int) -> int:
    """#{tau in A : (y tau y^-1)^j = tau}; j must be a unit mod exponent."""
    if math.gcd(j, exponent) != 1:
        raise EulerError(f"j = {j} is not coprime to the exponent {exponent}")
    # y tau y^-1 in functional notation is tau.conjugate(y) here
    return sum(1 for t in A if t.conjugate(y) ** j == t)


def tame_euler_factor(G: GeneratedGroup, T: GeneratedGroup, coset: Permutation, j: int,
                      checks: int = 20, rng: random.Random | None = None) -> TameFactor:
    """Coefficients of the tame factor for Frobenius in coset*T with character j.

    The count is recomputed for ``checks`` random representatives of the
    coset; a disagreement means T does not act through G/T.
    """
    if not G.contains(coset):
        raise EulerError("coset representative is not in G")
    M = _module(G, T)
    e = M.exponent
    if math.gcd(j, e) != 1:
        raise EulerError(f"j = {j} is not coprime to exp(T) = {e}")
    rng = rng or random.Random(0)
    reps = [coset] + [coset * M.table.perm(rng.randrange(M.size)) for _ in range(checks)]
    table = M.table
    pj = M.power_map(j)
    results = set()
    for y in reps:
        img = pj[table.conjugation_map(y)]
        fixed = img == np.arange(M.size)
        coeffs = {0: 1}
        for d in np.unique(M.ind[fixed]):
            if d:
                coeffs[int(d)] = int(np.sum(fixed & (M.ind == d)))
        results.add(tuple(sorted(coeffs.items())))
    if len(results) != 1:
        raise InvariantViolation("tame factor depends on the coset representative")
    return TameFactor(dict(results.pop()), coset, j, e)


def _action_perms(M: ModuleData, A: np.ndarray, action: str) -> list:
    pos = np.full(M.size, -1, dtype=np.int64)
    pos[A] = np.arange(len(A))
    maps = list(M.conj)
    if action == "conj+powers":
        maps += [M.power_map(u) for u in M.units() if u != 1]
    elif action != "conj":
        raise EulerError(f"unknown action {action!r}")
    out = []
    for m in maps:
        img = pos[m[A]]
        if (img < 0).any():
            raise InvariantViolation("A_a(T) is not stable under the action")
        out.append(tuple(int(x) for x in img))
    return out


def pole_order(G: GeneratedGroup, T: GeneratedGroup, action: str = "conj") -> OrbitDecomposition:
    """Orbits of A_{a(T)} under conjugation (and coprime powers), with a Burnside check."""
    M = _module(G, T)
    if M.size == 1:
        raise EulerError("T is trivial")
    A = M.A(M.a)
    n = len(A)
    perms = _action_perms(M, A, action)
    orbits = M.orbits_on(range(n), [np.array(p) for p in perms])
    labelled = tuple(tuple(M.table.perm(int(A[i])) for i in orb) for orb in orbits)
    gens = [Permutation._raw(p) for p in perms if list(p) != list(range(n))] or [Permutation.identity(n)]
    Gamma = GeneratedGroup(gens, n)
    table = Gamma.table
    burnside = int(np.sum(table.perms == np.arange(n)[None, :]))
    dec = OrbitDecomposition(action, labelled, tuple(len(o) for o in orbits), Gamma.order, burnside)
    if not dec.burnside_holds:
        raise InvariantViolation(
            f"Burnside mismatch: sum of fixed points {burnside} != {dec.count} * {Gamma.order}")
    return dec


def coset_representatives(G: GeneratedGroup, T: GeneratedGroup) -> list:
    """One element of G per coset of T."""
    quo = pc.quotient_regular(G, T)
    return list(quo.coset_representatives)


def factor_table(G: GeneratedGroup, T: GeneratedGroup, js: list | None = None) -> list:
    """(coset representative, j, TameFactor) over all cosets and units."""
    M = _module(G, T)
    js = js or M.units()
    out = []
    for y in coset_representatives(G, T):
        for j in js:
            out.append((y, j, tame_euler_factor(G, T, y, j, checks=4)))
    return out


def truncated_series(factor: TameFactor, primes: list, s: float) -> float:
    """Product of one factor over the given primes; a debugging aid only."""
    out = 1.0
    for p in primes:
        out *= sum(c * p ** (-d * s) for d, c in factor.coefficients.items())
    return out
