import io

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prefixchain.ingestion import (
    AsTriplet,
    BgpUpdateRecord,
    ParseStats,
    allocations_from_pfx2as,
    collapse_prepends,
    format_update,
    oracle_edges,
    parse_pfx2as,
    parse_updates,
    path_from_triplets,
    read_genesis_csv,
    transactions_from_updates,
    triplets_from_path,
    write_genesis_csv,
)
from prefixchain.ledger import Announce, Withdraw, parse_prefix

from conftest import P, World


def payloads(txs):
    return [t.input for t in txs]


def replay(records, merge_window=0):
    w = World([(P, 1)])
    txs = transactions_from_updates(records, w.keys, merge_window)
    for tx in txs:
        w.check_apply(tx)
    return w, txs


# -- pfx2as -----------------------------------------------------------------

def test_pfx2as_single_and_multi_origin():
    stats = ParseStats()
    recs = parse_pfx2as(io.StringIO("10.0.0.0\t8\t15169\n10.0.0.0\t8\t1_2\ngarbage line\n192.0.2.0\t24\t3,4\n"), stats)
    assert [(str(r.prefix), r.origins) for r in recs] == [
        ("10.0.0.0/8", (15169,)), ("10.0.0.0/8", (1, 2)), ("192.0.2.0/24", (3, 4)),
    ]
    assert stats.parsed == 3 and stats.skipped == 1


def test_pfx2as_rejects_bad_asn_and_length():
    stats = ParseStats()
    assert parse_pfx2as(["10.0.0.0\t33\t1", "10.0.0.0\t8\tx", "10.0.0.0\t8\t-1"], stats) == []
    assert stats.skipped == 3


def test_allocations_dedupe_and_csv_round_trip():
    recs = parse_pfx2as(["10.0.0.0\t8\t1_2", "10.0.0.0\t8\t2", "2001:db8::\t32\t3"])
    allocs = allocations_from_pfx2as(recs)
    assert allocs == [(P, 1), (P, 2), (parse_prefix("2001:db8::/32"), 3)]
    buf = io.StringIO()
    assert write_genesis_csv(allocs, buf) == 3
    assert read_genesis_csv(io.StringIO(buf.getvalue())) == allocs


# -- triplets ---------------------------------------------------------------

def test_triplets_three_hop():
    assert triplets_from_path([3, 2, 1]) == [AsTriplet(2, 3, None), AsTriplet(1, 2, 3), AsTriplet(None, 1, 2)]


def test_triplets_single_hop():
    assert triplets_from_path([1]) == [AsTriplet(None, 1, None)]


def test_prepend_collapse():
    assert triplets_from_path([3, 2, 2, 1]) == triplets_from_path([3, 2, 1])
    assert collapse_prepends([5, 5, 5]) == (5,)


def test_loop_rejected():
    with pytest.raises(ValueError):
        triplets_from_path([1, 2, 1])


@given(st.lists(st.integers(1, 30), min_size=1, max_size=12))
def test_path_reconstruction(raw):
    path = collapse_prepends(raw)
    if len(set(path)) != len(path):
        return
    assert path_from_triplets(triplets_from_path(raw)) == path


# -- update log ---------------------------------------------------------------

def test_parse_updates_and_format_round_trip():
    text = "100|A|10.0.0.0/8|3 2 2 1\n101|W|10.0.0.0/8|2\n102|W|10.0.0.0/8|\n103|A|10.0.0.0/8|3 {4,5} 1\nbad\n"
    stats = ParseStats()
    recs = parse_updates(io.StringIO(text), stats)
    assert recs == [
        BgpUpdateRecord(100, "A", P, (3, 2, 1)),
        BgpUpdateRecord(101, "W", P, (), 2),
        BgpUpdateRecord(102, "W", P, (), None),
    ]
    assert stats.skipped == 2
    assert parse_updates([format_update(r) for r in recs]) == recs


def test_three_hop_announce_transactions():
    _, txs = replay([BgpUpdateRecord(10, "A", P, (3, 2, 1))])
    assert payloads(txs) == [Announce(P, 1, (), (2,)), Announce(P, 2, (1,), (3,))]
    assert all(t.timestamp == 10 for t in txs)


def test_merge_window_groups_advertiser():
    recs = [BgpUpdateRecord(10, "A", P, (3, 2, 1)), BgpUpdateRecord(12, "A", P, (5, 2, 1))]
    _, merged = replay(recs, merge_window=5)
    assert payloads(merged) == [Announce(P, 1, (), (2,)), Announce(P, 2, (1,), (3, 5))]
    _, unmerged = replay(recs, merge_window=0)
    assert payloads(unmerged) == [Announce(P, 1, (), (2,)), Announce(P, 2, (1,), (3,)), Announce(P, 2, (1,), (5,))]


def test_withdraw_explicit_and_attributed():
    recs = [BgpUpdateRecord(10, "A", P, (3, 2, 1)), BgpUpdateRecord(20, "W", P, (), 2)]
    _, txs = replay(recs)
    assert payloads(txs)[-1] == Withdraw(P, 2)
    recs = [BgpUpdateRecord(10, "A", P, (3, 2, 1)), BgpUpdateRecord(20, "W", P, (), None)]
    _, txs = replay(recs)
    assert payloads(txs)[-1] == Withdraw(P, 3)


def test_unattributable_withdraw_skipped():
    stats = ParseStats()
    assert transactions_from_updates([BgpUpdateRecord(1, "W", P, ())], World([(P, 1)]).keys, stats=stats) == []
    assert stats.skipped == 1


def test_reannounce_after_withdraw_re_emits():
    recs = [
        BgpUpdateRecord(10, "A", P, (2, 1)),
        BgpUpdateRecord(11, "A", P, (2, 1)),
        BgpUpdateRecord(20, "W", P, (), 1),
        BgpUpdateRecord(30, "A", P, (2, 1)),
    ]
    _, txs = replay(recs)
    assert payloads(txs) == [Announce(P, 1, (), (2,)), Withdraw(P, 1), Announce(P, 1, (), (2,))]


# -- oracle equivalence and merge soundness --------------------------------------

@st.composite
def tree_paths(draw):
    """Collector-first paths that all follow one routing tree rooted at AS1."""
    n = draw(st.integers(2, 20))
    parent = {a: draw(st.integers(1, a - 1)) for a in range(2, n + 1)}
    starts = draw(st.lists(st.integers(1, n), min_size=1, max_size=15))
    out = []
    for ts, s in enumerate(starts):
        path = [s]
        while path[-1] != 1:
            path.append(parent[path[-1]])
        out.append(BgpUpdateRecord(100 + ts, "A", P, tuple(path)))
    return out


@settings(max_examples=60, deadline=None)
@given(tree_paths(), st.integers(0, 20))
def test_graph_matches_oracle_and_merge_is_sound(records, window):
    w0, _ = replay(records, 0)
    w1, _ = replay(records, window)
    oracle = oracle_edges(records)[P]
    assert w0.state.bgp.graph(P).edges() == oracle
    assert w1.state.bgp.graph(P).edges() == oracle
