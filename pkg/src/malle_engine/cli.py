"""Command line interface: ``malle-engine <command>``.

Exit codes: 0 success, 1 usage error, 2 bad input data, 3 an internal
invariant failed (including a failed verification).
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from . import census
from . import eulerlocal as el
from . import invariants as iv
from . import permcore as pc
from . import pushforward as pfw
from . import ruleledger as rl

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _global_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("engine options")
    g.add_argument("--threads", type=int, default=1, help="worker processes")
    g.add_argument("--max-order", type=int, default=20_000,
                   help="groups above this order get seed bounds only")
    g.add_argument("--rule-pack", default="standard",
                   help="standard, conjectural-torsion, conjectural-EV (comma separated)")
    g.add_argument("--seeds", type=Path, default=None,
                   help="seed config JSON (default: the shipped seed file)")
    g.add_argument("--no-seed-file", action="store_true", help="use built-in seeds only")
    g.add_argument("--deg-k", type=int, default=1, help="degree of the base field")
    g.add_argument("--assume-max-b", action=argparse.BooleanOptionalAction, default=True,
                   help="collapse the log-power interval to its upper end")
    g.add_argument("--h1-mode", choices=("inductive", "simple"), default="inductive")
    g.add_argument("--twisted-quotients", choices=("shortcut", "strict"), default="shortcut",
                   help="shortcut: allow the twisted-quotient step (records marked uncertified)")
    g.add_argument("--max-rounds", type=int, default=16)
    g.add_argument("--assume-weak-lower", action="store_true")


def _db_args(p: argparse.ArgumentParser, max_degree: int = 12) -> None:
    p.add_argument("paths", nargs="*", type=Path,
                   help="group record files (default: the shipped fixtures)")
    p.add_argument("--max-degree", type=int, default=max_degree,
                   help="highest shipped fixture degree when no paths are given")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="malle-engine", description="Counting-exponent certification for Galois groups")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("ingest-check", help="validate group record files")
    _db_args(c)

    c = sub.add_parser("invariants", help="a, b, index spectrum and concentration per group")
    _db_args(c)
    c.add_argument("--id", action="append", default=None, help="restrict to these ids")
    c.add_argument("--json", action="store_true")

    c = sub.add_parser("stats", help="census counts per degree")
    _db_args(c)
    c.add_argument("--threads", type=int, default=1)
    c.add_argument("--json", action="store_true")

    c = sub.add_parser("propagate", help="run the bound propagation and write a ledger")
    _db_args(c, max_degree=6)
    _global_flags(c)
    c.add_argument("-o", "--output", type=Path, default=None, help="ledger file to write")

    c = sub.add_parser("report", help="render a ledger file")
    c.add_argument("ledger", type=Path)
    c.add_argument("--format", choices=("text", "csv", "markdown"), default="text")
    c.add_argument("--replay", action="store_true", help="replay every stored bound first")
    c.add_argument("--chain", default=None, help="print the provenance chain of one group")

    c = sub.add_parser("euler", help="tame Euler factor table for (G, T)")
    _db_args(c)
    c.add_argument("--id", required=True)
    c.add_argument("--normal-order", type=int, default=None,
                   help="choose the abelian normal subgroup of this order (default: T_min)")

    c = sub.add_parser("verify-degree6", help="reproduce the sextic table")
    c.add_argument("paths", nargs="*", type=Path,
                   help="record files (default: shipped fixtures of degree 1 to 6)")
    _global_flags(c)
    return p


def _config(args) -> rl.EngineConfig:
    if args.no_seed_file:
        seeds = ()
    else:
        seeds = rl.load_seed_config(args.seeds or rl.DEFAULT_SEEDS_PATH)
    return rl.EngineConfig(
        rule_pack=args.rule_pack, deg_k=args.deg_k, assume_max_b=args.assume_max_b,
        h1_mode=args.h1_mode, twisted_quotients=args.twisted_quotients,
        assume_weak_lower=args.assume_weak_lower, seeds=seeds, max_rounds=args.max_rounds,
        max_order=args.max_order, threads=max(1, args.threads))


def _load_db(args, min_degree: int = 1) -> census.Database:
    paths = args.paths or census.shipped_fixtures(getattr(args, "max_degree", 6), min_degree)
    return census.ingest(paths)


def cmd_ingest_check(args) -> int:
    db = _load_db(args)
    per: dict = {}
    for e in db.entries.values():
        per[e.degree] = per.get(e.degree, 0) + 1
    for d in sorted(per):
        print(f"degree {d}: {per[d]} groups")
    print(f"total: {len(db)} groups")
    return EXIT_OK


def cmd_invariants(args) -> int:
    db = _load_db(args)
    ids = args.id or db.ids()
    out = []
    for g in ids:
        if g not in db.groups:
            raise UsageError(f"unknown group id {g}")
        G = db.groups[g]
        rec = iv.malle_record(G, with_multiplicity=False)
        row = {"id": g, "degree": G.degree, "order": G.order, "a": rec.a, "b_malle": rec.b_malle_Q,
               "concentrated": rec.concentrated, "concentrated_abelian": rec.concentrated_abelian,
               "t_min_order": rec.t_min.order if rec.a is not None else 1,
               "certified": rec.certified}
        if G.order > 1:
            spec = iv.index_spectrum(G)
            row["spectrum"] = {str(k): v for k, v in sorted(spec.counts().items())}
            if rec.concentrated_abelian:
                b = iv.b_twisted_interval(G, rec.t_min)
                row["b_interval"] = [b.b_generic, b.b_conj]
        out.append(row)
    if args.json:
        for row in out:
            print(json.dumps(row, sort_keys=True))
        return EXIT_OK
    for row in out:
        extra = f" b(T_min) in [{row['b_interval'][0]},{row['b_interval'][1]}]" if "b_interval" in row else ""
        print(f"{row['id']:>6} order {row['order']:>8} a={row['a']} b={row['b_malle']} "
              f"concentrated={'yes' if row['concentrated'] else 'no'}"
              f"{' (abelian)' if row['concentrated_abelian'] else ''} |T_min|={row['t_min_order']}{extra}")
    return EXIT_OK


def cmd_stats(args) -> int:
    db = _load_db(args)
    st = census.stats(db, max(1, args.threads))
    if args.json:
        print(json.dumps(st, sort_keys=True))
    else:
        print(census.format_stats(st))
    return EXIT_OK


def cmd_propagate(args) -> int:
    cfg = _config(args)
    db = _load_db(args)
    t0 = time.perf_counter()
    ledger, summary = census.run_propagation(db, cfg, args.output)
    for line in summary.lines():
        print(line)
    print(f"config hash: {ledger.config_digest}")
    print(f"elapsed: {time.perf_counter() - t0:.2f}s", file=sys.stderr)
    if args.output is None:
        sys.stdout.write(census.report(ledger, "text"))
    return EXIT_OK


def cmd_report(args) -> int:
    ledger, _ = census.read_ledger(args.ledger)
    if args.replay:
        n = rl.replay_ledger(ledger)
        print(f"replayed {n} bounds", file=sys.stderr)
    if args.chain:
        if args.chain not in ledger.records:
            raise UsageError(f"unknown group id {args.chain}")
        for app in ledger.chain(args.chain):
            params = ", ".join(f"{k}={v}" for k, v in app.plan.params)
            print(f"{app.id}  {app.rule}  [{app.plan.subject}]  theta={app.theta}  -> {app.output}"
                  + (f"  ({params})" if params else ""))
        return EXIT_OK
    sys.stdout.write(census.report(ledger, args.format))
    return EXIT_OK


def cmd_euler(args) -> int:
    db = _load_db(args)
    if args.id not in db.groups:
        raise UsageError(f"unknown group id {args.id}")
    G = db.groups[args.id]
    if args.normal_order is None:
        T = iv.t_min(G)
        if T.order == G.order or not pc.is_abelian(T):
            raise UsageError(f"{args.id} is not concentrated in an abelian T_min; pass --normal-order")
    else:
        cands = [N for N in pc.normal_subgroups(G)
                 if N.order == args.normal_order and pc.is_abelian(N)]
        if not cands:
            raise UsageError(f"no abelian normal subgroup of order {args.normal_order}")
        T = cands[0]
    print(f"{args.id}, T of order {T.order}")
    M = iv.ModuleData(G, T)
    print(f"a(T) = {M.a}, exp(T) = {M.exponent}")
    for y, j, f in el.factor_table(G, T):
        print(f"  coset {str(y):<28} j={j:<3} {f}")
    for action in ("conj", "conj+powers"):
        dec = el.pole_order(G, T, action)
        print(f"pole order ({action}): {dec.count}  orbit sizes {list(dec.sizes)}  "
              f"Burnside {dec.burnside_sum}/{dec.group_order}")
    return EXIT_OK


def cmd_verify_degree6(args) -> int:
    cfg = _config(args)
    t0 = time.perf_counter()
    db = census.ingest(args.paths or census.shipped_fixtures(6))
    sextic = [g for g in db.ids() if db.entries[g].degree == 6]
    flags = [census.group_flags(g, db.groups[g]) for g in sextic]
    conc = sum(f.concentrated for f in flags)
    ok_all = True
    line = f"concentrated {conc} / not concentrated {len(flags) - conc}"
    ok = conc == census.DEGREE6_CONCENTRATED and len(flags) == 16
    ok_all &= ok
    print(f"[{'ok' if ok else 'FAIL'}] {line}")
    ledger = rl.propagate(db.groups, cfg)
    for chk in census.check_degree6(ledger):
        ok_all &= chk.ok
        print(f"[{'ok' if chk.ok else 'FAIL'}] {chk.group}: expected {chk.expected}; got {chk.got}")
    r5 = ledger.records.get("6T5")
    if r5 is not None and r5.best_asymptotic is not None:
        print(f"6T5: b(Q, G) = {r5.summary['b_malle']}, certified log-power "
              f"{r5.best_asymptotic.log_power[1]} (the two differ)")
    for g in ("6T9", "6T10"):
        r = ledger.records.get(g)
        if r is not None and not r.certified:
            print(f"note: {g} relies on the twisted-quotient shortcut and is marked uncertified")
    elapsed = time.perf_counter() - t0
    print(f"elapsed {elapsed:.2f}s")
    sys.stdout.write(census.report(ledger.__class__(
        {g: ledger.records[g] for g in sextic}, ledger.applications, ledger.config_digest,
        ledger.rounds), "markdown"))
    return EXIT_OK if ok_all else EXIT_INTERNAL


COMMANDS = {
    "ingest-check": cmd_ingest_check, "invariants": cmd_invariants, "stats": cmd_stats,
    "propagate": cmd_propagate, "report": cmd_report, "euler": cmd_euler,
    "verify-degree6": cmd_verify_degree6,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (census.DataError, rl.SeedConfigError, pc.PermError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (el.InvariantViolation, rl.ReplayError) as exc:
        print(f"internal invariant violated: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except rl.LedgerError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
