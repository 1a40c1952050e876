"""Counting-exponent algebra and the propagation ledger.

Exponents are exact rational intervals with an optional infinitesimal.
Each database group gets a list of plans derived from its structure.  A
plan is an affine formula in at most one other group's current upper
exponent, optionally followed by a gate.  Propagation evaluates the plans
round by round against the previous round's ledger and keeps strict
improvements, recording a replayable application for every stored bound.

All scales are discriminant exponents.  Unless a name says otherwise an
exponent is measured against the discriminant of the group being bounded
(written X below), and q_*disc <= X throughout.
"""

from __future__ import annotations

import hashlib
import json
import math
import multiprocessing as mp
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Mapping

import numpy as np

from . import invariants as iv
from . import permcore as pc
from . import pushforward as pfw
from .permcore import GeneratedGroup

SCHEMA_VERSION = 1
DEFAULT_SEEDS_PATH = Path(__file__).resolve().parent / "data" / "seeds.json"
PACKS = ("standard", "conjectural-torsion", "conjectural-EV")
TWIST_RULE = "abelian:twisted-quotient"
SUBMODULE_LIMIT = 256
SUBMODULE_CAP = 2000
QUOTIENT_SEARCH_LIMIT = 2000
SPLIT_DEPTH = 3


class LedgerError(ValueError):
    pass


class SeedConfigError(LedgerError):
    pass


class ReplayError(LedgerError):
    pass


def _frac(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, str):
        return Fraction(x)
    return Fraction(x)


def _decimal(q: Fraction, places: int = 4) -> str:
    return f"{float(q):.{places}f}"


# ---------------------------------------------------------------------------
# exponents and bounds


@dataclass(frozen=True)
class Exponent:
    """An exact interval [lo, hi] plus an optional +epsilon."""

    lo: Fraction
    hi: Fraction
    eps: bool = False

    def __post_init__(self):
        object.__setattr__(self, "lo", _frac(self.lo))
        object.__setattr__(self, "hi", _frac(self.hi))
        if self.lo > self.hi:
            raise LedgerError(f"empty exponent interval [{self.lo}, {self.hi}]")

    @classmethod
    def of(cls, q, eps: bool = False) -> "Exponent":
        q = _frac(q)
        return cls(q, q, eps)

    @property
    def exact(self) -> bool:
        return self.lo == self.hi

    def __add__(self, other) -> "Exponent":
        if isinstance(other, Exponent):
            return Exponent(self.lo + other.lo, self.hi + other.hi, self.eps or other.eps)
        q = _frac(other)
        return Exponent(self.lo + q, self.hi + q, self.eps)

    __radd__ = __add__

    def __mul__(self, c) -> "Exponent":
        c = _frac(c)
        if c < 0:
            raise LedgerError("exponents scale by nonnegative rationals only")
        if c == 0:
            return Exponent.of(0)
        return Exponent(self.lo * c, self.hi * c, self.eps)

    __rmul__ = __mul__

    def __truediv__(self, c) -> "Exponent":
        c = _frac(c)
        if c <= 0:
            raise LedgerError("division by a nonpositive rational")
        return self * (1 / c)

    def excess_over(self, c) -> "Exponent":
        """max(self - c, 0), endpoint by endpoint."""
        c = _frac(c)
        return Exponent(max(self.lo - c, 0), max(self.hi - c, 0), self.eps)

    def with_eps(self, flag: bool = True) -> "Exponent":
        return Exponent(self.lo, self.hi, flag or self.eps) if flag else Exponent(self.lo, self.hi)

    def lt(self, other) -> bool:
        """Certified strict comparison; epsilon never decides it."""
        bound = other.lo if isinstance(other, Exponent) else _frac(other)
        return self.hi < bound

    def sort_key(self) -> tuple:
        return (self.hi, self.eps, self.lo)

    def to_json(self) -> dict:
        return {"lo": str(self.lo), "hi": str(self.hi), "eps": self.eps}

    @classmethod
    def from_json(cls, d: dict) -> "Exponent":
        return cls(Fraction(d["lo"]), Fraction(d["hi"]), bool(d["eps"]))

    def __str__(self) -> str:
        core = str(self.lo) if self.exact else f"[{_decimal(self.lo)}, {_decimal(self.hi)}]"
        return core + ("+ε" if self.eps else "")


# |Cl_K[2]| << disc^(0.2784...) for [K:Q] <= 4, stored as a bracketing interval
BSTTTZ2 = Exponent(Fraction(2784, 10000), Fraction(2785, 10000))
ZERO = Exponent.of(0)

KINDS = ("asymptotic", "upper", "lower")


@dataclass(frozen=True)
class GrowthBound:
    kind: str
    exponent: Exponent
    log_power: tuple = (1, 1)
    provenance: tuple = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise LedgerError(f"unknown bound kind {self.kind!r}")
        lo, hi = self.log_power
        if not 1 <= lo <= hi:
            raise LedgerError(f"bad log-power interval {self.log_power}")

    @property
    def has_epsilon(self) -> bool:
        return self.exponent.eps

    def same_value(self, other: "GrowthBound") -> bool:
        return (self.kind, self.exponent, tuple(self.log_power)) == \
            (other.kind, other.exponent, tuple(other.log_power))

    def to_json(self) -> dict:
        return {"kind": self.kind, "exponent": self.exponent.to_json(),
                "log_power": list(self.log_power), "has_epsilon": self.has_epsilon,
                "provenance": list(self.provenance)}

    @classmethod
    def from_json(cls, d: dict) -> "GrowthBound":
        return cls(d["kind"], Exponent.from_json(d["exponent"]), tuple(d["log_power"]),
                   tuple(d["provenance"]))

    def __str__(self) -> str:
        lo, hi = self.log_power
        logs = "" if hi == 1 else (f" (log X)^{lo - 1}" if lo == hi else f" (log X)^[{lo - 1},{hi - 1}]")
        return f"{self.kind} X^{self.exponent}{logs}"


# ---------------------------------------------------------------------------
# class group torsion


def _prime_of(q: int) -> int:
    p = 2
    while q % p:
        p += 1
    return p


def _packs(pack) -> frozenset:
    if isinstance(pack, (set, frozenset, tuple, list)):
        names = frozenset(pack)
    else:
        names = frozenset(x.strip() for x in str(pack).replace("+", ",").split(",") if x.strip())
    unknown = names - set(PACKS)
    if unknown:
        raise LedgerError(f"unknown rule pack(s): {sorted(unknown)}")
    return names or frozenset({"standard"})


def torsion_exponent(ell: int, abs_degree: int, tags=frozenset(), pack="standard") -> Exponent:
    """t with |Cl_F[ell]| << disc(F/Q)^(t+eps) for [F:Q] = abs_degree."""
    if abs_degree < 1:
        raise LedgerError("field degree must be positive")
    if "conjectural-torsion" in _packs(pack) or "conjectural" in tags:
        return Exponent.of(0, True)
    if f"{ell}-group" in tags:
        # genus theory: closure group an ell-group
        return Exponent.of(0, True)
    if ell == 2:
        if abs_degree <= 4:
            return BSTTTZ2.with_eps()
        return Exponent.of(Fraction(1, 2) - Fraction(1, 2 * abs_degree), True)
    return Exponent.of(Fraction(1, 2), True)


class TorsionTable:
    """torsion_exponent with the pack fixed."""

    def __init__(self, pack="standard"):
        self.pack = _packs(pack)

    def __call__(self, ell: int, abs_degree: int, tags=frozenset()) -> Exponent:
        return torsion_exponent(ell, abs_degree, tags, self.pack)


def hom_cl_exponent(invariants, abs_degree: int, tags=frozenset(), pack="standard") -> Exponent:
    """Exponent for |Hom(Cl_F, A)| with A given by prime-power cyclic factors."""
    total = ZERO
    for q in invariants:
        q = int(q)
        if q == 1:
            continue
        ell = _prime_of(q)
        k = round(math.log(q, ell))
        total = total + torsion_exponent(ell, abs_degree, tags, pack) * k
    return total


# ---------------------------------------------------------------------------
# configuration and seeds


@dataclass(frozen=True)
class SeedEntry:
    selector: str
    kind: str
    exponent: Fraction
    log_power: tuple = (1, 1)
    has_epsilon: bool = False
    citation: str = ""

    def to_json(self) -> dict:
        return {"selector": self.selector, "kind": self.kind,
                "numerator": self.exponent.numerator, "denominator": self.exponent.denominator,
                "log_power": list(self.log_power), "has_epsilon": self.has_epsilon,
                "citation": self.citation}


SEED_TAGS = ("abelian", "nilpotent", "solvable", "regular", "primitive")


def parse_seed_entries(entries: list, source: str = "<seeds>") -> tuple:
    out = []
    for k, e in enumerate(entries, 1):
        where = f"{source}: entry {k}"
        try:
            sel = str(e["selector"])
            kind = str(e["kind"])
            q = Fraction(int(e["numerator"]), int(e["denominator"]))
        except (KeyError, TypeError, ValueError, ZeroDivisionError) as exc:
            raise SeedConfigError(f"{where}: malformed seed ({exc})") from None
        cite = str(e.get("citation", "")).strip()
        if not cite:
            raise SeedConfigError(f"{where}: seed for {sel} has no citation")
        if kind not in KINDS:
            raise SeedConfigError(f"{where}: unknown kind {kind!r}")
        lp = e.get("log_power", 1)
        lp = (int(lp), int(lp)) if isinstance(lp, int) else tuple(int(x) for x in lp)
        if len(lp) != 2 or not 1 <= lp[0] <= lp[1]:
            raise SeedConfigError(f"{where}: bad log_power {e.get('log_power')!r}")
        out.append(SeedEntry(sel, kind, q, lp, bool(e.get("has_epsilon", False)), cite))
    return tuple(out)


def load_seed_config(path) -> tuple:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SeedConfigError(f"{path}:{exc.lineno}: {exc.msg}") from None
    if not isinstance(data, dict) or data.get("version") != 1 or "seeds" not in data:
        raise SeedConfigError(f"{path}: expected {{'version': 1, 'seeds': [...]}}")
    return parse_seed_entries(data["seeds"], str(path))


@dataclass(frozen=True)
class EngineConfig:
    rule_pack: str = "standard"
    deg_k: int = 1
    assume_max_b: bool = True
    h1_mode: str = "inductive"
    twisted_quotients: str = "shortcut"
    assume_weak_lower: bool = False
    builtin_seeds: bool = True
    seeds: tuple = ()
    max_rounds: int = 16
    max_order: int = 20_000
    threads: int = 1

    def __post_init__(self):
        _packs(self.rule_pack)
        if self.h1_mode not in ("simple", "inductive"):
            raise LedgerError(f"unknown h1 mode {self.h1_mode!r}")
        if self.twisted_quotients not in ("shortcut", "strict"):
            raise LedgerError(f"unknown twisted-quotient mode {self.twisted_quotients!r}")
        if self.deg_k < 1:
            raise LedgerError("deg_k must be a positive integer")

    @property
    def packs(self) -> frozenset:
        return _packs(self.rule_pack)

    def to_json(self) -> dict:
        """Everything that can change a ledger; the worker count cannot."""
        return {
            "rule_pack": sorted(self.packs), "deg_k": self.deg_k,
            "assume_max_b": self.assume_max_b, "h1_mode": self.h1_mode,
            "twisted_quotients": self.twisted_quotients,
            "assume_weak_lower": self.assume_weak_lower,
            "builtin_seeds": self.builtin_seeds,
            "seeds": [s.to_json() for s in self.seeds],
            "max_rounds": self.max_rounds, "max_order": self.max_order,
        }

    def digest(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def default_config(**kw) -> EngineConfig:
    """Config with the shipped seed file loaded."""
    if "seeds" not in kw:
        kw["seeds"] = load_seed_config(DEFAULT_SEEDS_PATH)
    return EngineConfig(**kw)


# ---------------------------------------------------------------------------
# plans and rule applications


@dataclass(frozen=True)
class Plan:
    """theta = const + factor * (upper exponent of ``ref``), then an optional gate.

    With a gate, theta < gate gives an asymptotic with exponent ``target``
    and the recorded log-power; otherwise the output is the upper bound
    fail_scale * theta + fail_offset + eps.  Without a gate the output is
    theta itself, of the given kind.
    """

    rule: str
    group: str
    subject: str
    const: Exponent
    ref: str | None = None
    factor: Fraction = Fraction(1)
    gate: Fraction | None = None
    target: Fraction | None = None
    log_power: tuple = (1, 1)
    fail_scale: Fraction = Fraction(1)
    fail_offset: Fraction = Fraction(0)
    kind: str = "upper"
    params: tuple = ()

    def to_json(self) -> dict:
        return {
            "rule": self.rule, "group": self.group, "subject": self.subject,
            "const": self.const.to_json(), "ref": self.ref, "factor": str(self.factor),
            "gate": None if self.gate is None else str(self.gate),
            "target": None if self.target is None else str(self.target),
            "log_power": list(self.log_power), "fail_scale": str(self.fail_scale),
            "fail_offset": str(self.fail_offset), "kind": self.kind,
            "params": [list(p) for p in self.params],
        }

    @classmethod
    def from_json(cls, d: dict) -> "Plan":
        return cls(
            d["rule"], d["group"], d["subject"], Exponent.from_json(d["const"]), d["ref"],
            Fraction(d["factor"]), None if d["gate"] is None else Fraction(d["gate"]),
            None if d["target"] is None else Fraction(d["target"]), tuple(d["log_power"]),
            Fraction(d["fail_scale"]), Fraction(d["fail_offset"]), d["kind"],
            tuple(tuple(p) for p in d["params"]),
        )


def assemble(plan: Plan, ref_exponent: Exponent | None) -> tuple:
    """(theta, output bound without provenance) for a plan and its input."""
    theta = plan.const
    if plan.ref is not None:
        if ref_exponent is None:
            raise LedgerError(f"plan {plan.rule} for {plan.group} needs a bound for {plan.ref}")
        theta = theta + ref_exponent * plan.factor
    if plan.gate is None:
        return theta, GrowthBound(plan.kind, theta, tuple(plan.log_power))
    if theta.lt(plan.gate):
        return theta, GrowthBound("asymptotic", Exponent.of(plan.target), tuple(plan.log_power))
    out = (theta * plan.fail_scale + plan.fail_offset).with_eps()
    return theta, GrowthBound("upper", out, (1, 1))


@dataclass(frozen=True)
class RuleApplication:
    id: str
    plan: Plan
    input_group: str | None
    input_bound: GrowthBound | None
    theta: Exponent
    output: GrowthBound

    @property
    def rule(self) -> str:
        return self.plan.rule

    @property
    def group(self) -> str:
        return self.plan.group

    def to_json(self) -> dict:
        return {"id": self.id, "plan": self.plan.to_json(), "input_group": self.input_group,
                "input_bound": None if self.input_bound is None else self.input_bound.to_json(),
                "theta": self.theta.to_json(), "output": self.output.to_json()}

    @classmethod
    def from_json(cls, d: dict) -> "RuleApplication":
        ib = d["input_bound"]
        return cls(d["id"], Plan.from_json(d["plan"]), d["input_group"],
                   None if ib is None else GrowthBound.from_json(ib),
                   Exponent.from_json(d["theta"]), GrowthBound.from_json(d["output"]))


def _apply(plan: Plan, inp: GrowthBound | None) -> RuleApplication:
    theta, out = assemble(plan, inp.exponent if inp is not None else None)
    body = {"plan": plan.to_json(), "input": None if inp is None else inp.to_json(),
            "output": out.to_json()}
    digest = hashlib.sha1(json.dumps(body, sort_keys=True).encode()).hexdigest()[:12]
    app_id = f"{plan.group}#{digest}"
    chain = (tuple(inp.provenance) if inp is not None else ()) + (app_id,)
    out = GrowthBound(out.kind, out.exponent, out.log_power, chain)
    return RuleApplication(app_id, plan, plan.ref, inp, theta, out)


# ---------------------------------------------------------------------------
# ledger records


STATUSES = ("proven-asymptotic", "weak-upper", "upper-only", "unknown")


@dataclass
class LedgerRecord:
    group: str
    degree: int
    summary: dict
    best_upper: GrowthBound | None = None
    best_lower: GrowthBound | None = None
    best_asymptotic: GrowthBound | None = None
    certified: bool = True

    @property
    def status(self) -> str:
        if self.best_asymptotic is not None:
            return "proven-asymptotic"
        a = self.summary.get("a")
        if self.best_upper is None or a is None:
            return "unknown"
        e = self.best_upper.exponent
        if e.exact and e.lo == Fraction(1, a):
            return "weak-upper"
        return "upper-only"

    @property
    def provenance(self) -> tuple:
        best = self.best_asymptotic or self.best_upper
        return best.provenance if best is not None else ()

    def to_json(self) -> dict:
        def enc(b):
            return None if b is None else b.to_json()
        return {"group": self.group, "degree": self.degree, "summary": self.summary,
                "best_upper": enc(self.best_upper), "best_lower": enc(self.best_lower),
                "best_asymptotic": enc(self.best_asymptotic), "status": self.status,
                "certified": self.certified}

    @classmethod
    def from_json(cls, d: dict) -> "LedgerRecord":
        def dec(b):
            return None if b is None else GrowthBound.from_json(b)
        rec = cls(d["group"], d["degree"], d["summary"], dec(d["best_upper"]),
                  dec(d["best_lower"]), dec(d["best_asymptotic"]), d["certified"])
        if rec.status != d["status"]:
            raise LedgerError(f"{rec.group}: stored status {d['status']} disagrees with its bounds")
        return rec


@dataclass
class Ledger:
    records: dict
    applications: dict
    config_digest: str
    rounds: int = 0

    def __getitem__(self, gid: str) -> LedgerRecord:
        return self.records[gid]

    def status_counts(self) -> dict:
        out = {s: 0 for s in STATUSES}
        for r in self.records.values():
            out[r.status] += 1
        return out

    def chain(self, gid: str) -> list:
        return [self.applications[a] for a in self.records[gid].provenance]


def _upper_key(b: GrowthBound) -> tuple:
    return (b.exponent.hi, b.exponent.lo, b.exponent.eps, b.log_power[1], b.log_power[0],
            0 if b.kind == "asymptotic" else 1)


def _tie_key(b: GrowthBound) -> tuple:
    return (len(b.provenance), b.provenance)


def _as_upper(b: GrowthBound) -> GrowthBound:
    return GrowthBound("upper", b.exponent, b.log_power, b.provenance) if b.kind == "asymptotic" else b


def _merge(rec: LedgerRecord, cands: list) -> bool:
    """Fold this round's candidates into a record; True if anything improved."""
    changed = False
    uppers = [b for b in cands if b.kind in ("upper", "asymptotic")]
    if uppers:
        best = min(uppers, key=lambda b: (_upper_key(b), _tie_key(b)))
        if rec.best_upper is None or _upper_key(best) < _upper_key(rec.best_upper):
            rec.best_upper = best
            changed = True
    asym = [b for b in cands if b.kind == "asymptotic"]
    if asym:
        best = min(asym, key=lambda b: (b.log_power[1], -b.log_power[0], _tie_key(b)))
        cur = rec.best_asymptotic
        if cur is None or (best.log_power[1], -best.log_power[0]) < (cur.log_power[1], -cur.log_power[0]):
            rec.best_asymptotic = best
            changed = True
    lowers = [b for b in cands if b.kind in ("lower", "asymptotic")]
    if lowers:
        def lkey(b):
            return (-b.exponent.lo, b.exponent.eps, 0 if b.kind == "asymptotic" else 1)
        best = min(lowers, key=lambda b: (lkey(b), _tie_key(b)))
        if rec.best_lower is None or lkey(best) < lkey(rec.best_lower):
            rec.best_lower = best
            changed = True
    return changed


def _certified(rec: LedgerRecord, apps: dict) -> bool:
    if not rec.summary.get("certified", True):
        return False
    for b in (rec.best_asymptotic, rec.best_upper):
        if b is not None and any(apps[a].rule == TWIST_RULE or apps[a].plan.params and
                                 dict(apps[a].plan.params).get("twisted") == "yes"
                                 for a in b.provenance):
            return False
    return True


# ---------------------------------------------------------------------------
# group analysis


@dataclass(frozen=True)
class GroupAnalysis:
    group: str
    degree: int
    summary: dict
    plans: tuple
    notes: tuple = ()


def order_key(gid: str, degree: int) -> tuple:
    head, _, tail = gid.partition("T")
    return (degree, int(tail) if tail.isdigit() else 10 ** 9, gid)


AVERAGE_RULES = {
    # (ell, [E:k]) -> (theta over all such E, citation)
    (3, 2): (Fraction(1), "Davenport-Heilbronn; Datskovsky-Wright over number fields"),
    (2, 3): (Fraction(1), "Bhargava; Bhargava-Shankar-Wang over number fields"),
}


def _field_count_exponent(d: int) -> tuple:
    """Exponent for all degree-d extensions of k by relative discriminant."""
    if d == 1:
        return Fraction(0), "base field"
    if d == 2:
        return Fraction(1), "quadratic extensions"
    return Fraction(d + 2, 4), "Schmidt"


def _summary(G: GeneratedGroup) -> dict:
    rec = iv.malle_record(G, with_multiplicity=False)
    st = pc.structure_predicates(G)
    out = {
        "order": G.order,
        "a": rec.a,
        "b_malle": rec.b_malle_Q,
        "concentrated": rec.concentrated,
        "concentrated_abelian": rec.concentrated_abelian,
        "abelian": st.is_abelian,
        "nilpotent": st.is_nilpotent,
        "solvable": st.is_solvable,
        "regular": G.order == G.degree,
        "primitive": pc.is_primitive(G),
        "certified": rec.certified,
    }
    return out


class _ModuleContext:
    """One abelian normal T of G with the quotient data the H1 rules need.

    Submodules of T are boolean masks over T's element table; subgroups
    of Q = G/T are masks over Q's table.  Lifts of Q elements to G come
    from the pushforward witnesses, so the action of Q on T is read off
    conjugation by those lifts.
    """

    def __init__(self, G, T, pfd, towers, cfg: EngineConfig):
        self.G, self.T, self.pfd, self.towers, self.cfg = G, T, pfd, towers, cfg
        self.M = iv.ModuleData(G, T)
        self.tt = self.M.table
        self.NT = self.tt.order
        self.Q = pfd.quotient
        self.qt = self.Q.table
        self.NQ = self.qt.order
        self.cq = pc.conjugacy_classes(self.Q)
        coset = self.qt.perms[:, 0].astype(np.int64)
        self.lifts = [pfd.witnesses[int(c)] for c in coset]
        self.act = np.stack([self.tt.conjugation_map(x) for x in self.lifts])
        self.tinv = self.tt.inverse_map()
        self.pf = np.array([pfd.class_values[c] for c in self.cq.class_of_rank], dtype=np.int64)
        self.qgen = [self.qt.rank_of(g) for g in self.Q.generators]
        self.qconj = [self.qt.conjugation_map(g) for g in self.Q.generators]
        self.class_reps = [self.qt.rank_of(r) for r in self.cq.representatives]
        self._h1: dict = {}
        self._c: dict = {}
        self._pow: dict = {}
        self._subs = None
        self.full = np.ones(self.NT, dtype=bool)

    # -- T side ------------------------------------------------------------

    def span(self, ranks) -> np.ndarray:
        mask = np.zeros(self.NT, dtype=bool)
        mask[0] = True
        for r in ranks:
            r = int(r)
            if mask[r]:
                continue
            cur = np.flatnonzero(mask)
            while True:
                nxt = self.tt.compose(cur, np.full(len(cur), r))
                nxt = np.unique(nxt[~mask[nxt]])
                if not len(nxt):
                    break
                mask[nxt] = True
                cur = nxt
        return mask

    def power(self, j: int) -> np.ndarray:
        if j not in self._pow:
            self._pow[j] = self.M.power_map(j)
        return self._pow[j]

    def quotient_invariants(self, N: np.ndarray, Mm: np.ndarray) -> list:
        """Prime-power cyclic factors of N/Mm."""
        size = int(N.sum()) // int(Mm.sum())
        out = []
        Nr = np.flatnonzero(N)
        for p in iv._prime_factors(size):
            logs = [0]
            k = 0
            while True:
                k += 1
                c = int(Mm[self.power(p ** k)[Nr]].sum()) // int(Mm.sum())
                lg = round(math.log(c, p))
                if lg == logs[-1]:
                    break
                logs.append(lg)
            ge = [logs[i] - logs[i - 1] for i in range(1, len(logs))] + [0]
            for i in range(1, len(ge)):
                out += [p ** i] * (ge[i - 1] - ge[i])
        return sorted(out)

    def centralizer(self, N: np.ndarray) -> np.ndarray:
        Nr = np.flatnonzero(N)
        return (self.act[:, Nr] == Nr[None, :]).all(axis=1)

    def stabilizer(self, Mm: np.ndarray) -> np.ndarray:
        return Mm[self.act[:, np.flatnonzero(Mm)]].all(axis=1)

    def core(self, Mm: np.ndarray) -> np.ndarray:
        Mr = np.flatnonzero(Mm)
        img = np.zeros((self.NQ, self.NT), dtype=bool)
        img[np.arange(self.NQ)[:, None], self.act[:, Mr]] = True
        return img.all(axis=0)

    def trivial_on(self, N: np.ndarray, Mm: np.ndarray) -> np.ndarray:
        """Q elements acting trivially on N/Mm."""
        Nr = np.flatnonzero(N)
        a = self.act[:, Nr].reshape(-1)
        b = np.tile(self.tinv[Nr], self.NQ)
        return Mm[self.tt.compose(a, b)].reshape(self.NQ, len(Nr)).all(axis=1)

    def is_nilpotent(self, N: np.ndarray) -> bool:
        cur = N
        while cur.sum() > 1:
            Cr = np.flatnonzero(cur)
            gens = np.concatenate([self.tt.compose(self.act[q, Cr], self.tinv[Cr]) for q in self.qgen])
            nxt = self.span(np.unique(gens))
            if nxt.sum() == cur.sum():
                return False
            cur = nxt
        return True

    def is_simple(self, N: np.ndarray) -> bool:
        n = int(N.sum())
        if n == 1:
            return False
        for t in np.flatnonzero(N)[1:]:
            if self.span(np.unique(self.act[:, t])).sum() != n:
                return False
        return True

    def submodules(self) -> list:
        """Subgroups of T (all of them when T is small), smallest first."""
        if self._subs is not None:
            return self._subs
        if self.NT > SUBMODULE_LIMIT:
            self._subs = []
            return self._subs
        seen: dict = {}
        for t in range(self.NT):
            m = self.span([t])
            seen.setdefault(m.tobytes(), m)
        cyclic = list(seen.values())
        frontier = list(cyclic)
        while frontier and len(seen) < SUBMODULE_CAP:
            nxt = []
            for A in frontier:
                for C in cyclic:
                    if (C <= A).all():
                        continue
                    J = self.span(np.flatnonzero(A | C))
                    key = J.tobytes()
                    if key not in seen:
                        seen[key] = J
                        nxt.append(J)
                        if len(seen) >= SUBMODULE_CAP:
                            break
                if len(seen) >= SUBMODULE_CAP:
                    break
            frontier = nxt
        subs = sorted(seen.values(), key=lambda m: (int(m.sum()), tuple(np.flatnonzero(m))))
        self._subs = subs
        return subs

    # -- Q side ------------------------------------------------------------

    def q_closure(self, start: np.ndarray | None, ranks: list) -> np.ndarray:
        gens = [self.qt.perm(int(r)) for r in ranks]
        if start is None:
            return self.qt.closure(None, gens)
        base = [self.qt.perm(int(r)) for r in np.flatnonzero(start)]
        return self.qt.closure(None, base + gens)

    def q_core(self, H: np.ndarray) -> np.ndarray:
        core = H.copy()
        while True:
            new = core.copy()
            for cm in self.qconj:
                img = np.zeros(self.NQ, dtype=bool)
                img[cm[np.flatnonzero(core)]] = True
                new &= img
            if (new == core).all():
                return core
            core = new

    def tags(self, H: np.ndarray) -> frozenset:
        index = self.NQ // int(self.q_core(H).sum())
        if index == 1:
            return frozenset()
        ps = iv._prime_factors(index)
        return frozenset({f"{ps[0]}-group"}) if len(ps) == 1 else frozenset()

    def field_scale(self, H: np.ndarray) -> tuple:
        """(c, d): disc of the fixed field of H is at most q_*disc^c, and d = [Q:H]."""
        key = H.tobytes()
        if key in self._c:
            return self._c[key]
        Hr = np.flatnonzero(H)
        d = self.NQ // len(Hr)
        if d == 1:
            self._c[key] = (Fraction(0), 1)
            return self._c[key]
        ar = np.arange(self.NQ)
        lab = ar.copy()
        for h in Hr:
            lab = np.minimum(lab, self.qt.compose(np.full(self.NQ, h), ar))
        reps = np.unique(lab)
        pos = np.full(self.NQ, -1, dtype=np.int64)
        pos[reps] = np.arange(len(reps))
        c = Fraction(0)
        for k in range(1, len(self.cq)):
            rho = self.class_reps[k]
            img = pos[lab[self.qt.compose(reps, np.full(len(reps), rho))]]
            ind = d - _cycle_count(img)
            c = max(c, Fraction(ind, int(self.pf[rho])))
        self._c[key] = (c, d)
        return self._c[key]

    def ind_on(self, H: np.ndarray) -> np.ndarray:
        """Index of every Q element on the cosets of H."""
        Hr = np.flatnonzero(H)
        d = self.NQ // len(Hr)
        ar = np.arange(self.NQ)
        lab = ar.copy()
        for h in Hr:
            lab = np.minimum(lab, self.qt.compose(np.full(self.NQ, h), ar))
        reps = np.unique(lab)
        pos = np.full(self.NQ, -1, dtype=np.int64)
        pos[reps] = np.arange(len(reps))
        by_class = np.zeros(len(self.cq), dtype=np.int64)
        for k in range(len(self.cq)):
            rho = self.class_reps[k]
            img = pos[lab[self.qt.compose(reps, np.full(len(reps), rho))]]
            by_class[k] = d - _cycle_count(img)
        return by_class[self.cq.class_of_rank]

    # -- H1 bounds ---------------------------------------------------------

    def block_mask(self, tower) -> np.ndarray | None:
        S = tower.block_stabilizer
        if not all(S.contains(t) for t in self.T.generators):
            return None
        return np.array([S.contains(x) for x in self.lifts])

    def h1ur(self, N: np.ndarray, depth: int = SPLIT_DEPTH) -> list:
        """Candidate exponents (X-scale) for |H1_ur(k, N(pi))| with rule tags."""
        key = (N.tobytes(), depth)
        if key in self._h1:
            return self._h1[key]
        cfg = self.cfg
        packs = cfg.packs
        Nr = np.flatnonzero(N)
        if len(Nr) == 1:
            self._h1[key] = [(ZERO, "zero module")]
            return self._h1[key]
        C = self.centralizer(N)
        if C.all():
            # constant module: Hom(Cl_k, N) is bounded for fixed k
            self._h1[key] = [(ZERO, "trivial action")]
            return self._h1[key]
        opts = []
        if self.is_nilpotent(N):
            opts.append((Exponent.of(0, True), "nilpotent module"))
        for i, tw in enumerate(self.towers):
            if not tw.A_is_abelian:
                continue
            if not all(tw.T_kernel.contains(self.tt.perm(int(r))) for r in Nr):
                continue
            S = self.block_mask(tw)
            if S is None:
                continue
            c, d = self.field_scale(S)
            invA = iv.ModuleData(tw.A_block, tw.A_block).abelian_invariants()
            t = hom_cl_exponent(invA, d * cfg.deg_k, self.tags(S), packs) * c
            opts.append((t.with_eps(), f"induced from block field (system {i}, m={tw.m})"))
        c, d = self.field_scale(C)
        ell_exp = int(np.lcm.reduce(self.M.orders[Nr]))
        if self.is_simple(N):
            t = torsion_exponent(ell_exp, d * cfg.deg_k, self.tags(C), packs) * c
            opts.append((t.with_eps(), "simple module"))
        dgen = self._dual_generators(N)
        opts.append((Exponent.of(Fraction(dgen, 2), True) * c, f"Minkowski, d={dgen}"))
        if cfg.h1_mode == "inductive" and depth > 0:
            opts += self._split(N, depth)
        self._h1[key] = opts
        return opts

    def _dual_generators(self, N: np.ndarray) -> int:
        if N.all():
            return iv.dual_module_generators(self.G, self.T)[0]
        gens = [self.tt.perm(int(r)) for r in np.flatnonzero(N)]
        sub = self.G.subgroup(_reduce_gens(self.tt, gens))
        return iv.dual_module_generators(self.G, sub)[0]

    def _split(self, N: np.ndarray, depth: int) -> list:
        cfg = self.cfg
        out = []
        n = int(N.sum())
        for Mm in self.submodules():
            m = int(Mm.sum())
            if m == n or not (Mm <= N).all() or m == 1:
                continue
            H1 = self.stabilizer(Mm)
            Kt = H1 & self.trivial_on(N, Mm)
            core = self.core(Mm)
            t_core = best_exponent(self.h1ur(core, depth - 1)) if core.sum() > 1 else ZERO
            inv_q = self.quotient_invariants(N, Mm)
            c, d = self.field_scale(Kt)
            piece = hom_cl_exponent(inv_q, d * cfg.deg_k, self.tags(Kt), cfg.packs) * c
            out.append(((t_core + piece).with_eps(), f"split over M of order {m} (core {int(core.sum())})"))
        return out

    def t_best(self) -> tuple:
        return min(self.h1ur(self.full), key=lambda o: (o[0].sort_key(), o[1]))

    # -- averaged and fibred assemblies -----------------------------------

    def assemblies(self) -> list:
        """(theta, rule, description, twisted) from averaging over fixed fields."""
        if self.NQ > QUOTIENT_SEARCH_LIMIT:
            return []
        cfg = self.cfg
        out = []
        center = np.ones(self.NQ, dtype=bool)
        for cm in self.qconj:
            center &= cm == np.arange(self.NQ)
        deltas: dict = {}
        triv = np.zeros(self.NQ, dtype=bool)
        triv[0] = True
        deltas[triv.tobytes()] = triv
        for z in np.flatnonzero(center)[1:]:
            D = self.q_closure(None, [z])
            deltas.setdefault(D.tobytes(), D)
        D = self.q_closure(None, list(np.flatnonzero(center)))
        deltas.setdefault(D.tobytes(), D)
        subs = self.submodules()
        for D in sorted(deltas.values(), key=lambda m: (int(m.sum()), tuple(np.flatnonzero(m)))):
            hs: dict = {D.tobytes(): D}
            for x in range(self.NQ):
                if D[x]:
                    continue
                H = self.q_closure(D, [x])
                hs.setdefault(H.tobytes(), H)
            for H in sorted(hs.values(), key=lambda m: (int(m.sum()), tuple(np.flatnonzero(m)))):
                d = self.NQ // int(H.sum())
                if d == 1 or d > 6 or not (self.q_core(H) == D).all():
                    continue
                out += self._assemble_over(D, H, d, subs)
        return out

    def _assemble_over(self, D, H, d, subs) -> list:
        cfg = self.cfg
        out = []
        cE, _ = self.field_scale(H)
        tags = self.tags(H)
        fibred = D.sum() > 1
        if fibred:
            Dr = np.flatnonzero(D)[1:]
            a_delta = int(self.pf[Dr].min())
            indE = self.ind_on(H)
            # cosets of D: label by the smallest rank in xD
            ar = np.arange(self.NQ)
            lab = ar.copy()
            for z in np.flatnonzero(D):
                lab = np.minimum(lab, self.qt.compose(ar, np.full(self.NQ, z)))
            c_prime = Fraction(0)
            for L in np.unique(lab):
                members = np.flatnonzero(lab == L)
                if D[members].any():
                    continue
                c_prime = max(c_prime, Fraction(int(indE[members[0]]), int(self.pf[members].min())))
            if c_prime == 0:
                return []
            gamma = 1 / (a_delta * c_prime)
        for Mm in subs:
            m = int(Mm.sum())
            if m == self.NT:
                continue
            Hr = np.flatnonzero(H)
            if not Mm[self.act[Hr][:, np.flatnonzero(Mm)]].all():
                continue
            trivial = self.trivial_on(self.full, Mm)[Hr].all()
            core = self.core(Mm)
            inv_q = self.quotient_invariants(self.full, Mm)
            twisted = False
            if not trivial:
                if cfg.twisted_quotients != "shortcut" or m == 1 or core.sum() > 1 or len(inv_q) != 1 \
                        or inv_q[0] not in iv._prime_factors(inv_q[0]):
                    continue
                twisted = True
            t_core = best_exponent(self.h1ur(core, SPLIT_DEPTH - 1)) if core.sum() > 1 else ZERO
            alphas = []
            beta_E, why = _field_count_exponent(d)
            alphas.append((hom_cl_exponent(inv_q, d * cfg.deg_k, tags, cfg.packs) + beta_E,
                           f"{why} count with pointwise torsion"))
            if len(inv_q) == 1 and inv_q[0] in iv._prime_factors(inv_q[0]):
                rule = AVERAGE_RULES.get((inv_q[0], d))
                if rule is not None and "conjectural-torsion" not in cfg.packs:
                    alphas.append((Exponent.of(rule[0]), rule[1]))
            for alpha, why in alphas:
                if fibred:
                    theta = (Exponent.of(Fraction(1, a_delta)) + alpha.excess_over(gamma) * c_prime
                             + t_core).with_eps()
                    name = "abelian:fibred"
                    desc = (f"fibre over central subgroup of order {int(D.sum())}, field degree {d}, "
                            f"a_D={a_delta}, c'={c_prime}, alpha from {why}")
                else:
                    theta = (alpha * cE + t_core).with_eps()
                    name = "abelian:field-average"
                    desc = f"sum over fixed fields of degree {d}, c_E={cE}, {why}"
                desc += f", M of order {m}"
                out.append((theta, TWIST_RULE if twisted else name, desc, twisted))
        return out



def _cycle_count(img: np.ndarray) -> int:
    seen = np.zeros(len(img), dtype=bool)
    c = 0
    for i in range(len(img)):
        if not seen[i]:
            c += 1
            j = i
            while not seen[j]:
                seen[j] = True
                j = int(img[j])
    return c


def _reduce_gens(table, gens: list) -> list:
    out: list = []
    mask = None
    for g in gens:
        if mask is not None and mask[table.rank_of(g)]:
            continue
        mask = table.closure(mask, out, [g])
        out.append(g)
    return out


def best_exponent(opts: list) -> Exponent:
    return min(opts, key=lambda o: (o[0].sort_key(), o[1]))[0]


class Analyzer:
    """Builds the plans of every group in a database."""

    def __init__(self, groups: Mapping, config: EngineConfig):
        self.groups = groups
        self.cfg = config
        self._by_order: dict | None = None
        self._fp: dict = {}
        self._spec: dict = {}

    # database lookups ------------------------------------------------------

    def _heavy_ok(self, G: GeneratedGroup) -> bool:
        return G.order > 1 and G.order <= self.cfg.max_order and G.is_enumerable()

    def _fingerprint(self, gid: str) -> tuple:
        if gid not in self._fp:
            self._fp[gid] = pc.abstract_fingerprint(self.groups[gid])
        return self._fp[gid]

    def same_abstract(self, X: GeneratedGroup) -> list:
        if self._by_order is None:
            self._by_order = {}
            for gid, G in self.groups.items():
                if self._heavy_ok(G):
                    self._by_order.setdefault(G.order, []).append(gid)
        cands = self._by_order.get(X.order, [])
        if not cands:
            return []
        fx = pc.abstract_fingerprint(X)
        return [g for g in cands if self._fingerprint(g) == fx]

    def compare(self, gid: str, X: GeneratedGroup, spec_x=None):
        """c_lo with count_X(Y) <= count_gid(Y^(1/c_lo)), via verified isomorphisms."""
        D = self.groups[gid]
        if gid not in self._spec:
            self._spec[gid] = iv.index_spectrum(D)
        cmp = pfw.compare_groups(D, X, self._spec[gid], spec_x)
        if cmp is None or cmp.c_lo <= 0:
            return None
        return cmp

    # plans ---------------------------------------------------------------

    def analyse(self, gid: str) -> GroupAnalysis:
        G = self.groups[gid]
        summary = _summary(G)
        plans = list(self._seed_plans(gid, G, summary))
        notes = []
        if self._heavy_ok(G):
            plans += self._swap_plans(gid, G)
            towers = pfw.tower_types(G)
            normals = [T for T in pc.normal_subgroups(G)
                       if 1 < T.order < G.order and pc.is_abelian(T)]
            for T in normals:
                try:
                    plans += self._abelian_plans(gid, G, T, towers)
                except pc.ThresholdExceeded as exc:
                    notes.append(f"abelian normal subgroup of order {T.order} skipped: {exc}")
            for i, tw in enumerate(towers):
                plans += self._imprimitive_plans(gid, G, tw, i)
                plans += self._s3_wreath_plans(gid, G, tw, i)
        elif G.order > 1:
            notes.append("order above the analysis limit: seeds only")
        return GroupAnalysis(gid, G.degree, summary, tuple(plans), tuple(notes))

    def _seed_plans(self, gid, G, s) -> list:
        n = G.degree
        cfg = self.cfg
        out = []
        if G.order == 1:
            return out
        if cfg.builtin_seeds:
            out.append(Plan("seed:schmidt", gid, "G", Exponent.of(Fraction(n + 2, 4)),
                            params=(("citation", "Schmidt"),)))
        a = s["a"]
        if a is not None and cfg.builtin_seeds:
            if s["nilpotent"]:
                out.append(Plan("seed:nilpotent", gid, "G", Exponent.of(Fraction(1, a), True),
                                params=(("citation", "nilpotent groups, weak form"),)))
            if s["regular"] and G.order > 4:
                out.append(Plan("seed:regular", gid, "G", Exponent.of(Fraction(3, 8), True),
                                params=(("citation", "Ellenberg-Venkatesh, regular representation"),)))
            if s["abelian"]:
                if cfg.deg_k == 1:
                    b = (s["b_malle"], s["b_malle"])
                else:
                    bi = iv.b_twisted_interval(G, G)
                    b = (bi.b_generic, bi.b_conj)
                out.append(Plan("seed:abelian", gid, "G", Exponent.of(Fraction(1, a)),
                                kind="asymptotic", log_power=b,
                                params=(("citation", "Wright, abelian extensions"),)))
            if cfg.assume_weak_lower:
                out.append(Plan("seed:weak-lower", gid, "G", Exponent.of(Fraction(1, a), True),
                                kind="lower", params=(("citation", "assumed (conjectural)"),)))
        for e in cfg.seeds:
            if _selector_matches(e.selector, gid, s):
                out.append(Plan("seed:config", gid, e.selector, Exponent.of(e.exponent, e.has_epsilon),
                                kind=e.kind, log_power=tuple(e.log_power),
                                params=(("citation", e.citation),)))
        return out

    def _swap_plans(self, gid, G) -> list:
        out = []
        for other in self.same_abstract(G):
            if other == gid:
                continue
            cmp = self.compare(other, G)
            if cmp is None:
                continue
            out.append(Plan("swap", gid, f"representation {other}", ZERO, ref=other,
                            factor=1 / cmp.c_lo,
                            params=(("c_lo", str(cmp.c_lo)), ("c_hi", str(cmp.c_hi)))))
        return out

    def _log_power(self, G, T) -> tuple:
        bi = iv.b_twisted_interval(G, T)
        if self.cfg.assume_max_b:
            return (bi.b_conj, bi.b_conj)
        return (bi.b_generic, bi.b_conj)

    def quotient_count_options(self, gid, G, T, pfd, towers) -> list:
        """(const, ref, factor, tag) with #q_*Sur(X) << X^(const + factor * e_ref)."""
        out = []
        Q = pfd.quotient
        a_out = pfd.a_outside
        if pc.structure_predicates(Q).is_nilpotent:
            out.append((Exponent.of(Fraction(1, a_out), True), None, Fraction(1), "nilpotent quotient"))
        if "conjectural-EV" in self.cfg.packs:
            out.append((Exponent.of(Fraction(1, a_out), True), None, Fraction(1), "conjectural-EV"))
        spec = pfd.as_spectrum()
        for other in self.same_abstract(Q):
            cmp = self.compare(other, Q, spec)
            if cmp is not None:
                out.append((ZERO, other, 1 / cmp.c_lo, f"comparison with {other}, c_lo={cmp.c_lo}"))
        ct = pc.conjugacy_classes(Q)
        N = Q.order
        c_reg = min(Fraction(pfd.class_values[k], N - N // ct.orders[k]) for k in range(1, len(ct)))
        out.append((Exponent.of(Fraction(N + 2, 4) / c_reg), None, Fraction(1),
                    f"Schmidt on the regular quotient, c={c_reg}"))
        for tw in towers:
            if tw.T_kernel.order != T.order or not tw.T_kernel.same_group(T):
                continue
            scale = Fraction(tw.m, G.degree)
            for const, ref, factor, tag in self.block_count_options(tw.B):
                out.append((const * scale, ref, factor * scale, f"tower transfer m/n={scale}; {tag}"))
        return out

    def block_count_options(self, B: GeneratedGroup) -> list:
        """Bounds for the block group B itself: database comparisons and intrinsic seeds."""
        out = []
        if self._heavy_ok(B):
            for other in self.same_abstract(B):
                cmp = self.compare(other, B)
                if cmp is not None:
                    out.append((ZERO, other, 1 / cmp.c_lo, f"B via {other}, c_lo={cmp.c_lo}"))
        m = B.degree
        out.append((Exponent.of(Fraction(m + 2, 4)), None, Fraction(1), "B by Schmidt"))
        if B.order > 1:
            a = iv.a_of(B)
            st = pc.structure_predicates(B)
            if st.is_abelian:
                out.append((Exponent.of(Fraction(1, a)), None, Fraction(1), "B abelian"))
            elif st.is_nilpotent:
                out.append((Exponent.of(Fraction(1, a), True), None, Fraction(1), "B nilpotent"))
        return out

    def _abelian_plans(self, gid, G, T, towers) -> list:
        cfg = self.cfg
        aT = iv.ModuleData(G, T).a
        gate = Fraction(1, aT)
        logp = self._log_power(G, T)
        pfd = pfw.pushforward_index(G, T)
        ctx = _ModuleContext(G, T, pfd, towers, cfg)
        subject = f"T order {T.order} <{', '.join(sorted(str(g) for g in T.generators))}>"
        t, t_tag = ctx.t_best()
        out = []
        common = dict(gate=gate, target=gate, log_power=logp)
        for const, ref, factor, tag in self.quotient_count_options(gid, G, T, pfd, towers):
            theta_const = const + t
            out.append(Plan("abelian:pointwise", gid, subject, theta_const, ref=ref, factor=factor,
                            params=(("a(T)", str(aT)), ("beta", tag), ("t", f"{t} ({t_tag})")),
                            **common))
        for theta, rule, desc, twisted in ctx.assemblies():
            out.append(Plan(rule, gid, subject, theta,
                            params=(("a(T)", str(aT)), ("assembly", desc),
                                    ("twisted", "yes" if twisted else "no")), **common))
        return out

    def _imprimitive_plans(self, gid, G, tw, i) -> list:
        if not tw.A_is_abelian or tw.T_kernel.order in (1, G.order):
            return []
        cfg = self.cfg
        K = tw.T_kernel
        aK = iv.ModuleData(G, K).a
        A = tw.A_block.order
        invA = iv.ModuleData(tw.A_block, tw.A_block).abelian_invariants()
        m = tw.m
        subject = f"tower m={m}, A order {A}, system {i}"
        b_tags = _ell_group_tags(tw.B.order)
        common = dict(gate=Fraction(A, aK), target=Fraction(1, aK), log_power=self._log_power(G, K),
                      fail_scale=Fraction(1, A))
        t = hom_cl_exponent(invA, m * cfg.deg_k, b_tags, cfg.packs)
        out = []
        opts = self.block_count_options(tw.B)
        for const, ref, factor, tag in opts:
            out.append(Plan("imprimitive:pointwise", gid, subject, const + t, ref=ref, factor=factor,
                            params=(("beta_B", tag), ("t", str(t))), **common))
        if len(invA) == 1 and invA[0] in iv._prime_factors(invA[0]):
            rule = AVERAGE_RULES.get((invA[0], m))
            if rule is not None and "conjectural-torsion" not in cfg.packs:
                out.append(Plan("imprimitive:average", gid, subject, Exponent.of(rule[0]),
                                params=(("average", rule[1]),), **common))
            if invA[0] == 2 and pc.is_primitive(tw.B) and m > 1:
                k = 1 - Fraction(1, 2 * m - 1)
                for const, ref, factor, tag in opts:
                    out.append(Plan("imprimitive:primitive-average", gid, subject,
                                    (const * k + Fraction(1, 2)).with_eps(), ref=ref, factor=factor * k,
                                    params=(("beta_B", tag), ("average", "Lemke Oliver-Smith, primitive B")),
                                    **common))
        return out

    def _s3_wreath_plans(self, gid, G, tw, i) -> list:
        if not is_s3_wreath_tower(G, tw):
            return []
        m = tw.m
        cfg = self.cfg
        subject = f"S3 wreath, m={m}, system {i}"
        t = torsion_exponent(2, m * cfg.deg_k, _ell_group_tags(tw.B.order), cfg.packs) * Fraction(2, 3)
        common = dict(gate=Fraction(2), target=Fraction(1), log_power=(1, 1),
                      fail_scale=Fraction(1, 3), fail_offset=Fraction(1, 3))
        out = []
        opts = self.block_count_options(tw.B)
        for const, ref, factor, tag in opts:
            out.append(Plan("s3-wreath:pointwise", gid, subject, const + t, ref=ref, factor=factor,
                            params=(("beta_B", tag), ("t", str(t))), **common))
        if pc.is_primitive(tw.B) and m > 1 and "conjectural-torsion" not in cfg.packs:
            k = Fraction(6 * m - 5, 6 * m - 3)
            for const, ref, factor, tag in opts:
                out.append(Plan("s3-wreath:primitive-average", gid, subject,
                                (const * k + Fraction(1, 3)).with_eps(), ref=ref, factor=factor * k,
                                params=(("beta_B", tag), ("average", "Lemke Oliver-Smith with Hoelder")),
                                **common))
        return out


def is_s3_wreath_tower(G: GeneratedGroup, tw) -> bool:
    """G = S3 wr B through this block system (blocks of size 3)."""
    m = tw.m
    return (tw.A_block.degree == 3 and tw.A_block.order == 6 and tw.T_kernel.order == 6 ** m
            and G.order == 6 ** m * tw.B.order)


def is_s3_wreath(G: GeneratedGroup) -> bool:
    return any(is_s3_wreath_tower(G, tw) for tw in pfw.tower_types(G))


def _ell_group_tags(order: int) -> frozenset:
    ps = iv._prime_factors(order) if order > 1 else []
    return frozenset({f"{ps[0]}-group"}) if len(ps) == 1 else frozenset()


def _selector_matches(selector: str, gid: str, s: dict) -> bool:
    if selector == gid:
        return True
    if selector in SEED_TAGS:
        return bool(s.get(selector))
    return False


# ---------------------------------------------------------------------------
# the three rule entry points on their own


def apply_abelian_theorem(G: GeneratedGroup, T: GeneratedGroup, ledger: Ledger | None = None,
                          config: EngineConfig | None = None, groups: Mapping | None = None,
                          gid: str = "G") -> tuple:
    """Best abelian-normal-subgroup bound for (G, T): (GrowthBound, RuleApplication)."""
    if not pc.is_abelian(T) or not pc.is_normal(G, T) or T.order in (1, G.order):
        raise LedgerError("T must be a proper nontrivial abelian normal subgroup")
    cfg = config or EngineConfig()
    an = Analyzer(groups or {}, cfg)
    plans = an._abelian_plans(gid, G, T, pfw.tower_types(G))
    return _best_of(plans, ledger)


def apply_imprimitive_cor(G: GeneratedGroup, tower, ledger: Ledger | None = None,
                          config: EngineConfig | None = None, groups: Mapping | None = None,
                          gid: str = "G") -> tuple:
    if not tower.A_is_abelian:
        raise LedgerError("the block group A is not abelian")
    an = Analyzer(groups or {}, config or EngineConfig())
    return _best_of(an._imprimitive_plans(gid, G, tower, 0), ledger)


def apply_s3_wreath(G: GeneratedGroup, ledger: Ledger | None = None,
                    config: EngineConfig | None = None, groups: Mapping | None = None,
                    gid: str = "G") -> tuple:
    an = Analyzer(groups or {}, config or EngineConfig())
    plans = []
    for i, tw in enumerate(pfw.tower_types(G)):
        plans += an._s3_wreath_plans(gid, G, tw, i)
    if not plans:
        raise LedgerError("G is not of the form S3 wr B")
    return _best_of(plans, ledger)


def _best_of(plans: list, ledger: Ledger | None) -> tuple:
    apps = []
    for p in plans:
        inp = None
        if p.ref is not None:
            if ledger is None or p.ref not in ledger.records or ledger[p.ref].best_upper is None:
                continue
            inp = ledger[p.ref].best_upper
        apps.append(_apply(p, inp))
    if not apps:
        raise LedgerError("no rule applies")
    app = min(apps, key=lambda a: (0 if a.output.kind == "asymptotic" else 1,
                                   _upper_key(a.output), _tie_key(a.output)))
    return app.output, app


# ---------------------------------------------------------------------------
# propagation


_WORKER_GROUPS: Mapping | None = None
_WORKER_CFG: EngineConfig | None = None


def _worker_init(groups, cfg):
    global _WORKER_GROUPS, _WORKER_CFG
    _WORKER_GROUPS, _WORKER_CFG = groups, cfg


def _worker_analyse(gid: str) -> GroupAnalysis:
    return Analyzer(_WORKER_GROUPS, _WORKER_CFG).analyse(gid)


def analyse_database(groups: Mapping, config: EngineConfig) -> dict:
    """gid -> GroupAnalysis; workers only change wall time, never results."""
    gids = sorted(groups, key=lambda g: order_key(g, groups[g].degree))
    if config.threads > 1 and len(gids) > 1:
        ctx = mp.get_context("fork")
        with ProcessPoolExecutor(config.threads, mp_context=ctx, initializer=_worker_init,
                                 initargs=(groups, config)) as ex:
            results = list(ex.map(_worker_analyse, gids, chunksize=1))
    else:
        an = Analyzer(groups, config)
        results = [an.analyse(g) for g in gids]
    return {a.group: a for a in results}


def propagate(groups: Mapping, config: EngineConfig | None = None, initial: Ledger | None = None,
              analyses: dict | None = None) -> Ledger:
    cfg = config or EngineConfig()
    if analyses is None:
        analyses = analyse_database(groups, cfg)
    gids = sorted(analyses, key=lambda g: order_key(g, analyses[g].degree))
    if initial is not None:
        records = {g: LedgerRecord.from_json(initial[g].to_json()) for g in gids}
        apps = dict(initial.applications)
    else:
        records = {g: LedgerRecord(g, analyses[g].degree, analyses[g].summary) for g in gids}
        apps = {}
    rounds = 0
    for _ in range(cfg.max_rounds):
        rounds += 1
        prev = {g: records[g].best_upper for g in gids}
        changed = False
        for g in gids:
            cands = []
            for plan in analyses[g].plans:
                inp = None
                if plan.ref is not None:
                    inp = prev.get(plan.ref)
                    if inp is None:
                        continue
                app = _apply(plan, inp)
                apps.setdefault(app.id, app)
                cands.append(app.output)
            if _merge(records[g], cands):
                changed = True
        if not changed:
            break
    used = set()
    for r in records.values():
        for b in (r.best_upper, r.best_lower, r.best_asymptotic):
            if b is not None:
                used.update(b.provenance)
    apps = {k: apps[k] for k in sorted(used)}
    for r in records.values():
        r.certified = _certified(r, apps)
    return Ledger(records, apps, cfg.digest(), rounds)


def replay(ledger: Ledger, app_id: str, _seen: dict | None = None) -> GrowthBound:
    """Re-run an application and, recursively, the one that produced its input."""
    seen = {} if _seen is None else _seen
    if app_id in seen:
        return seen[app_id]
    app = ledger.applications.get(app_id)
    if app is None:
        raise ReplayError(f"unknown application {app_id}")
    inp = app.input_bound
    if app.plan.ref is not None:
        if inp is None or not inp.provenance:
            raise ReplayError(f"{app_id}: input bound missing")
        again = replay(ledger, inp.provenance[-1], seen)
        if not again.same_value(inp) or again.provenance != inp.provenance:
            raise ReplayError(f"{app_id}: input no longer reproduces")
    redo = _apply(app.plan, inp)
    if redo.id != app.id or redo.output != app.output:
        raise ReplayError(f"{app_id}: output does not reproduce")
    seen[app_id] = redo.output
    return redo.output


def replay_ledger(ledger: Ledger) -> int:
    """Replay every stored bound; returns the number of bounds checked."""
    seen: dict = {}
    n = 0
    for r in ledger.records.values():
        for b in (r.best_upper, r.best_lower, r.best_asymptotic):
            if b is None:
                continue
            out = replay(ledger, b.provenance[-1], seen)
            if out.provenance != b.provenance or out.exponent != b.exponent \
                    or tuple(out.log_power) != tuple(b.log_power):
                raise ReplayError(f"{r.group}: stored bound does not replay")
            n += 1
    return n


# ---------------------------------------------------------------------------
# single-group views of the rule machinery


def seed_bounds(G: GeneratedGroup, config: EngineConfig | None = None, gid: str | None = None) -> list:
    """Seed bounds for one group.

    A lower bound carrying the epsilon flag reads X^(e - eps).
    """
    cfg = config or EngineConfig()
    gid = gid or G.name or "G"
    an = Analyzer({}, cfg)
    return [_apply(p, None).output for p in an._seed_plans(gid, G, _summary(G))]


def h1ur_exponent(G: GeneratedGroup, T: GeneratedGroup, config: EngineConfig | None = None) -> list:
    """Candidates (t, rule) for |H1_ur(k, T(pi))| << X^(t+eps), best first.

    X is the discriminant of the G-extension: each candidate has already
    been rescaled by the field-discriminant comparison of its rule.
    """
    cfg = config or EngineConfig()
    ctx = _ModuleContext(G, T, pfw.pushforward_index(G, T), pfw.tower_types(G), cfg)
    return sorted(ctx.h1ur(ctx.full), key=lambda o: (o[0].sort_key(), o[1]))


def quotient_count_exponent(G: GeneratedGroup, T: GeneratedGroup, ledger: Ledger | None = None,
                            pushforward=None, config: EngineConfig | None = None,
                            groups: Mapping | None = None) -> list:
    """Options (beta, tag) for #q_*Sur(G_k, G; X) << X^beta, best first.

    Options that need a database bound are only evaluated when the ledger
    has one.
    """
    cfg = config or EngineConfig()
    pfd = pushforward or pfw.pushforward_index(G, T)
    an = Analyzer(groups or {}, cfg)
    out = []
    for const, ref, factor, tag in an.quotient_count_options(G.name or "G", G, T, pfd,
                                                            pfw.tower_types(G)):
        if ref is not None:
            if ledger is None or ref not in ledger.records or ledger[ref].best_upper is None:
                continue
            const = const + ledger[ref].best_upper.exponent * factor
        out.append((const, tag))
    return sorted(out, key=lambda o: (o[0].sort_key(), o[1]))
