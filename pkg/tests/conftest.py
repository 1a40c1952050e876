import functools
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from malle_engine import census, ruleledger as rl  # noqa: E402


@functools.lru_cache(maxsize=None)
def shipped(max_degree=12):
    return census.ingest(census.shipped_fixtures(max_degree))


def group(gid):
    return shipped().groups[gid]


@functools.lru_cache(maxsize=None)
def ledger_le6(twisted="shortcut"):
    db = shipped(6)
    cfg = rl.default_config(twisted_quotients=twisted)
    return rl.propagate(db.groups, cfg)


@pytest.fixture
def G():
    return group


@functools.lru_cache(maxsize=None)
def abelian_normal_pairs(max_degree=12, max_order=500):
    """(gid, index into normal_subgroups) for every nontrivial abelian normal T."""
    from malle_engine import permcore as pc
    db = shipped(max_degree)
    out = []
    for g in db.ids():
        G = db.groups[g]
        if G.order == 1 or G.order > max_order:
            continue
        for i, N in enumerate(pc.normal_subgroups(G)):
            if N.order > 1 and pc.is_abelian(N):
                out.append((g, i))
    return tuple(out)


def main_path(gid):
    """Invariants through the library, keyed like the frozen oracle rows."""
    from malle_engine import invariants as iv, permcore as pc
    G = group(gid)
    rec = iv.malle_record(G, with_multiplicity=False)
    out = {"order": G.order, "a": rec.a}
    if G.order == 1:
        return out, G
    spec = iv.index_spectrum(G)
    out["spectrum"] = sorted(spec.counts().items())
    out["concentrated"] = rec.concentrated
    out["concentrated_abelian"] = rec.concentrated_abelian
    out["b_malle"] = rec.b_malle_Q
    out["t_min_order"] = rec.t_min.order
    normals = pc.normal_subgroups(G)
    out["normal_count"] = len(normals)
    ab = []
    for N in normals:
        if N.order > 1 and pc.is_abelian(N):
            b = iv.b_twisted_interval(G, N)
            ab.append([N.order, iv.ModuleData(G, N).a, b.b_generic, b.b_conj])
    out["abelian_normals"] = sorted(ab)
    return out, G
