"""Group databases, census statistics, ledger files and reports."""

from __future__ import annotations

import csv
import io
import json
import multiprocessing as mp
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from . import invariants as iv
from . import permcore as pc
from . import ruleledger as rl

DATA_DIR = Path(__file__).resolve().parent / "data"
LEDGER_SCHEMA = 1


class DataError(ValueError):
    """Bad input data; messages carry file and line."""


class LedgerFormatError(DataError):
    pass


# ---------------------------------------------------------------------------
# group record files


@dataclass(frozen=True)
class GroupEntry:
    id: str
    degree: int
    generators: tuple
    tags: tuple = ()
    name: str | None = None

    def to_json(self) -> dict:
        out = {"id": self.id, "degree": self.degree, "generators": list(self.generators)}
        if self.tags:
            out["tags"] = list(self.tags)
        if self.name is not None:
            out["name"] = self.name
        return out


@dataclass
class Database:
    entries: dict = field(default_factory=dict)
    groups: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.entries)

    def ids(self) -> list:
        return sorted(self.entries, key=lambda g: rl.order_key(g, self.entries[g].degree))

    def add(self, entry: GroupEntry, group: pc.GeneratedGroup) -> None:
        self.entries[entry.id] = entry
        self.groups[entry.id] = group

    def subset(self, ids) -> "Database":
        out = Database()
        for g in ids:
            out.add(self.entries[g], self.groups[g])
        return out


def _parse_line(text: str, where: str) -> GroupEntry:
    try:
        rec = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"{where}: invalid JSON ({exc.msg})") from None
    if not isinstance(rec, dict):
        raise DataError(f"{where}: expected a JSON object")
    for key in ("id", "degree", "generators"):
        if key not in rec:
            raise DataError(f"{where}: missing field {key!r}")
    gid, deg, gens = rec["id"], rec["degree"], rec["generators"]
    if not isinstance(gid, str) or not gid:
        raise DataError(f"{where}: id must be a nonempty string")
    if not isinstance(deg, int) or isinstance(deg, bool) or deg < 1:
        raise DataError(f"{where}: degree must be a positive integer")
    if not isinstance(gens, list) or not all(isinstance(g, str) for g in gens):
        raise DataError(f"{where}: generators must be a list of cycle strings")
    tags = rec.get("tags", [])
    if not isinstance(tags, list):
        raise DataError(f"{where}: tags must be a list")
    return GroupEntry(gid, deg, tuple(gens), tuple(str(t) for t in tags), rec.get("name"))


def _build(entry: GroupEntry, where: str) -> pc.GeneratedGroup:
    perms = []
    for text in entry.generators:
        try:
            perms.append(pc.parse_cycles(text, entry.degree))
        except pc.ParseError as exc:
            raise DataError(f"{where}: generator {text!r}: {exc}") from None
    G = pc.GeneratedGroup(perms, entry.degree, name=entry.id)
    if not G.is_transitive():
        raise DataError(f"{where}: {entry.id} is not transitive on 1..{entry.degree}")
    return G


def ingest(paths, db: Database | None = None) -> Database:
    """Parse GroupRecordFiles; the first bad line aborts with its location."""
    if isinstance(paths, (str, Path)):
        paths = [paths]
    db = db or Database()
    seen = {g: "earlier input" for g in db.entries}
    for path in paths:
        path = Path(path)
        try:
            lines = path.read_text(encoding="utf-8").splitlines()
        except OSError as exc:
            raise DataError(f"{path}: {exc.strerror}") from None
        for k, text in enumerate(lines, 1):
            if not text.strip():
                continue
            where = f"{path}:{k}"
            entry = _parse_line(text, where)
            if entry.id in seen:
                raise DataError(f"{where}: duplicate id {entry.id} (first seen at {seen[entry.id]})")
            seen[entry.id] = where
            db.add(entry, _build(entry, where))
    return db


def shipped_fixtures(max_degree: int = 12, min_degree: int = 1) -> list:
    return [DATA_DIR / f"degree{d}.jsonl" for d in range(min_degree, max_degree + 1)
            if (DATA_DIR / f"degree{d}.jsonl").exists()]


def serialize(db: Database) -> str:
    return "".join(json.dumps(db.entries[g].to_json()) + "\n" for g in db.ids())


# ---------------------------------------------------------------------------
# census statistics


@dataclass(frozen=True)
class GroupFlags:
    id: str
    degree: int
    order: int
    concentrated: bool
    concentrated_abelian: bool
    s3_wreath: bool
    certified: bool


def group_flags(gid: str, G: pc.GeneratedGroup) -> GroupFlags:
    if G.order == 1:
        return GroupFlags(gid, G.degree, 1, False, False, False, True)
    conc = iv.concentration(G)
    ct = pc.conjugacy_classes(G)
    return GroupFlags(gid, G.degree, G.order, conc["concentrated"], conc["concentrated_abelian"],
                      rl.is_s3_wreath(G), ct.certified)


_POOL_DB: Database | None = None


def _pool_init(db):
    global _POOL_DB
    _POOL_DB = db


def _pool_flags(gid):
    return group_flags(gid, _POOL_DB.groups[gid])


def all_flags(db: Database, threads: int = 1) -> list:
    ids = db.ids()
    if threads > 1 and len(ids) > 1:
        ctx = mp.get_context("fork")
        with ProcessPoolExecutor(threads, mp_context=ctx, initializer=_pool_init,
                                 initargs=(db,)) as ex:
            return list(ex.map(_pool_flags, ids, chunksize=4))
    return [group_flags(g, db.groups[g]) for g in ids]


STAT_FIELDS = ("total", "concentrated", "concentrated_abelian", "s3_wreath", "uncertified")


def stats(db: Database, threads: int = 1) -> dict:
    """Counts per degree plus cumulative totals."""
    per: dict = {}
    for f in all_flags(db, threads):
        row = per.setdefault(f.degree, dict.fromkeys(STAT_FIELDS, 0))
        row["total"] += 1
        row["concentrated"] += f.concentrated
        row["concentrated_abelian"] += f.concentrated_abelian
        row["s3_wreath"] += f.s3_wreath
        row["uncertified"] += not f.certified
    cumulative = dict.fromkeys(STAT_FIELDS, 0)
    out = {"per_degree": {}, "cumulative": {}}
    for d in sorted(per):
        out["per_degree"][d] = per[d]
        for k in STAT_FIELDS:
            cumulative[k] += per[d][k]
        out["cumulative"][d] = dict(cumulative)
    return out


def format_stats(st: dict) -> str:
    head = f"{'degree':>6} " + " ".join(f"{k:>20}" for k in STAT_FIELDS)
    lines = [head]
    for d, row in st["per_degree"].items():
        lines.append(f"{d:>6} " + " ".join(f"{row[k]:>20}" for k in STAT_FIELDS))
    if st["cumulative"]:
        last = st["cumulative"][max(st["cumulative"])]
        lines.append(f"{'all':>6} " + " ".join(f"{last[k]:>20}" for k in STAT_FIELDS))
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# ledger files


def ledger_lines(ledger: rl.Ledger, config: rl.EngineConfig) -> list:
    header = {"schema": LEDGER_SCHEMA, "config": config.to_json(),
              "config_hash": ledger.config_digest, "rounds": ledger.rounds,
              "records": len(ledger.records), "applications": len(ledger.applications)}
    out = [header]
    for g in sorted(ledger.records, key=lambda g: rl.order_key(g, ledger.records[g].degree)):
        out.append({"record": ledger.records[g].to_json()})
    for a in sorted(ledger.applications):
        out.append({"application": ledger.applications[a].to_json()})
    return [json.dumps(x, sort_keys=True, ensure_ascii=False) for x in out]


def dump_ledger(ledger: rl.Ledger, config: rl.EngineConfig) -> str:
    return "".join(line + "\n" for line in ledger_lines(ledger, config))


def write_ledger(ledger: rl.Ledger, config: rl.EngineConfig, path) -> None:
    Path(path).write_text(dump_ledger(ledger, config), encoding="utf-8")


def parse_ledger(text: str, source: str = "<ledger>") -> tuple:
    """(Ledger, config json) from LedgerFile text."""
    lines = text.splitlines()
    if not lines:
        raise LedgerFormatError(f"{source}: empty ledger file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise LedgerFormatError(f"{source}:1: invalid JSON ({exc.msg})") from None
    if not isinstance(header, dict) or "schema" not in header:
        raise LedgerFormatError(f"{source}:1: missing schema header")
    if header["schema"] != LEDGER_SCHEMA:
        raise LedgerFormatError(f"{source}:1: unsupported ledger schema {header['schema']!r}")
    records, apps = {}, {}
    for k, text in enumerate(lines[1:], 2):
        if not text.strip():
            continue
        where = f"{source}:{k}"
        try:
            obj = json.loads(text)
            if "record" in obj:
                rec = rl.LedgerRecord.from_json(obj["record"])
                records[rec.group] = rec
            elif "application" in obj:
                app = rl.RuleApplication.from_json(obj["application"])
                apps[app.id] = app
            else:
                raise LedgerFormatError(f"{where}: unknown line type")
        except LedgerFormatError:
            raise
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise LedgerFormatError(f"{where}: {exc}") from None
    if len(records) != header.get("records") or len(apps) != header.get("applications"):
        raise LedgerFormatError(f"{source}: record counts disagree with the header")
    ledger = rl.Ledger(records, apps, header["config_hash"], header.get("rounds", 0))
    return ledger, header["config"]


def read_ledger(path) -> tuple:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror}") from None
    return parse_ledger(text, str(path))


# ---------------------------------------------------------------------------
# propagation and reports


@dataclass
class PropagationSummary:
    counts: dict
    non_nilpotent_asymptotic: int
    uncertified: int
    rounds: int

    def lines(self) -> list:
        out = [f"{k}: {v}" for k, v in self.counts.items()]
        out.append(f"proven-asymptotic, non-nilpotent: {self.non_nilpotent_asymptotic}")
        out.append(f"uncertified records: {self.uncertified}")
        out.append(f"rounds: {self.rounds}")
        return out


def summarize(ledger: rl.Ledger) -> PropagationSummary:
    counts = ledger.status_counts()
    nn = sum(1 for r in ledger.records.values()
             if r.status == "proven-asymptotic" and not r.summary.get("nilpotent"))
    unc = sum(1 for r in ledger.records.values() if not r.certified)
    return PropagationSummary(counts, nn, unc, ledger.rounds)


def run_propagation(db: Database, config: rl.EngineConfig, out_path=None) -> tuple:
    ledger = rl.propagate(db.groups, config)
    if out_path is not None:
        write_ledger(ledger, config, out_path)
    return ledger, summarize(ledger)


def fmt_exponent(e: rl.Exponent) -> str:
    core = str(e.lo) if e.exact else f"[{e.lo},{e.hi}]"
    return core + ("+eps" if e.eps else "")


def fmt_bound(b: rl.GrowthBound | None) -> str:
    return "" if b is None else fmt_exponent(b.exponent)


def fmt_logs(b: rl.GrowthBound | None) -> str:
    if b is None:
        return ""
    lo, hi = b.log_power
    return str(lo) if lo == hi else f"[{lo},{hi}]"


REPORT_COLUMNS = ("id", "degree", "order", "a", "b_malle", "status", "asymptotic", "log_power",
                  "upper", "lower", "depth", "certified", "last_rule")


def report_rows(ledger: rl.Ledger) -> list:
    rows = []
    for g in sorted(ledger.records, key=lambda g: rl.order_key(g, ledger.records[g].degree)):
        r = ledger.records[g]
        prov = r.provenance
        last = ledger.applications[prov[-1]].rule if prov and prov[-1] in ledger.applications else ""
        s = r.summary
        rows.append({
            "id": g, "degree": str(r.degree), "order": str(s.get("order", "")),
            "a": "" if s.get("a") is None else str(s["a"]),
            "b_malle": "" if s.get("b_malle") is None else str(s["b_malle"]),
            "status": r.status, "asymptotic": fmt_bound(r.best_asymptotic),
            "log_power": fmt_logs(r.best_asymptotic or r.best_upper),
            "upper": fmt_bound(r.best_upper), "lower": fmt_bound(r.best_lower),
            "depth": str(len(prov)), "certified": "yes" if r.certified else "no",
            "last_rule": last,
        })
    return rows


def report(ledger: rl.Ledger, fmt: str = "text") -> str:
    rows = report_rows(ledger)
    cols = REPORT_COLUMNS
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
        return buf.getvalue()
    if fmt == "markdown":
        out = ["| " + " | ".join(cols) + " |", "|" + "|".join("---" for _ in cols) + "|"]
        out += ["| " + " | ".join(r[c] for c in cols) + " |" for r in rows]
        return "\n".join(out) + "\n"
    if fmt == "text":
        widths = {c: max([len(c)] + [len(r[c]) for r in rows]) for c in cols}
        out = ["  ".join(c.ljust(widths[c]) for c in cols)]
        out += ["  ".join(r[c].ljust(widths[c]) for c in cols).rstrip() for r in rows]
        return "\n".join(out) + "\n"
    raise ValueError(f"unknown report format {fmt!r}")


# ---------------------------------------------------------------------------
# the degree-6 table


# (status, exponent, log power) the sextic table predicts; None means "not checked"
DEGREE6_EXPECTED = {
    "6T1": ("proven-asymptotic", Fraction(1, 3), 1),
    "6T3": ("proven-asymptotic", Fraction(1, 2), 1),
    "6T4": ("proven-asymptotic", Fraction(1, 2), 1),
    "6T5": ("proven-asymptotic", Fraction(1, 2), 2),
    "6T6": ("proven-asymptotic", Fraction(1), 1),
    "6T7": ("upper-eps", Fraction(1, 2), None),
    "6T8": ("proven-asymptotic", Fraction(1, 2), 1),
    "6T9": ("upper-eps", Fraction(1, 2), None),
    "6T10": ("upper-eps", Fraction(1, 2), None),
    "6T11": ("proven-asymptotic", Fraction(1), 1),
    "6T13": ("proven-asymptotic", Fraction(1), 1),
}
DEGREE6_CONCENTRATED = 11


@dataclass
class Degree6Check:
    group: str
    ok: bool
    expected: str
    got: str


def check_degree6(ledger: rl.Ledger) -> list:
    out = []
    for g, (status, e, logs) in DEGREE6_EXPECTED.items():
        r = ledger.records.get(g)
        if r is None:
            out.append(Degree6Check(g, False, status, "missing"))
            continue
        if status == "proven-asymptotic":
            b = r.best_asymptotic
            ok = b is not None and b.exponent == rl.Exponent.of(e) and tuple(b.log_power) == (logs, logs)
            want = f"asymptotic X^{e} log-power {logs}"
        else:
            b = r.best_upper
            ok = (r.best_asymptotic is None and b is not None
                  and b.exponent == rl.Exponent.of(e, True))
            want = f"upper X^({e}+eps)"
        got = "none" if b is None else str(b)
        out.append(Degree6Check(g, ok, want, got))
    return out
