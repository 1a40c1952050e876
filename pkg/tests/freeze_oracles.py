"""Regenerate the frozen oracle outputs under tests/data.

Run from the repository root:  python3 tests/freeze_oracles.py [le8|census]
The census run enumerates every group of degree <= 12 and takes a while.
"""

import json
import math
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent))
import oracles  # noqa: E402

OUT = Path(__file__).resolve().parent / "data"
NAIVE_LIMIT = 2_000_000


def freeze_le8():
    rows = {}
    for d in range(1, 9):
        for gid, n, gens in oracles.load_degree(d):
            rows[gid] = oracles.invariants(gens, n)
    (OUT / "oracle_degree_le8.json").write_text(json.dumps(rows, indent=1, sort_keys=True) + "\n")


def freeze_census():
    rows = {}
    for d in range(1, 13):
        t = time.time()
        for gid, n, gens in oracles.load_degree(d):
            order = giant_order(gid, n)
            if order is not None and order > NAIVE_LIMIT:
                # too large to enumerate naively; the full symmetric and
                # alternating groups are generated by their minimal-index
                # elements (transpositions, 3-cycles), so never concentrated
                a = 1 if order == math.factorial(n) else 2
                rows[gid] = {"order": order, "a": a, "concentrated": False,
                             "concentrated_abelian": False, "method": "classical"}
                continue
            r = oracles.concentration_only(gens, n)
            r["method"] = "enumeration"
            rows[gid] = r
        print(d, round(time.time() - t, 1), flush=True)
    (OUT / "oracle_census_le12.json").write_text(json.dumps(rows, indent=1, sort_keys=True) + "\n")


def giant_order(gid, n):
    """Order of S(n) or A(n) read from the fixture name, else None."""
    with open(oracles.DATA / f"degree{n}.jsonl") as fh:
        names = {json.loads(line)["id"]: json.loads(line)["name"] for line in fh}
    if names[gid] == f"S({n})":
        return math.factorial(n)
    if names[gid] == f"A({n})":
        return math.factorial(n) // 2
    return None


if __name__ == "__main__":
    which = sys.argv[1] if len(sys.argv) > 1 else "le8"
    if which == "le8":
        freeze_le8()
    else:
        freeze_census()
