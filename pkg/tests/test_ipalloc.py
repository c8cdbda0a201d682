import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prefixchain.builders import build_assign, build_revoke, build_update
from prefixchain.errors import NonEmptyState, Reason
from prefixchain.ingestion import allocations_from_pfx2as, parse_pfx2as
from prefixchain.ledger import INFINITE_LEASE, Assign, Revoke, Transaction, Update, build_genesis_block
from prefixchain.state import LedgerState

from conftest import P, World


def assign(w, src, dest, duration, ts, transfer=True, prefix=P):
    return build_assign(w.state.ip, w.keys[src], src, prefix, dest, duration, transfer, ts)


def test_genesis_on_nonempty_state(world):
    with pytest.raises(NonEmptyState):
        world.state.ip.apply_genesis_assign(world.genesis.transactions[0])


def test_multi_origin_pfx2as_gives_co_owners():
    recs = parse_pfx2as(["10.0.0.0\t8\t1_2\n"])
    st_ = LedgerState.from_genesis(build_genesis_block(allocations_from_pfx2as(recs)).transactions[0])
    assert len(st_.ip.records[P]) == 2 and st_.ip.current_owners(P, 0) == {1, 2}


def test_assign_valid_and_applied(world):
    tx = world.check_apply(assign(world, 1, [2, 3], 60, 1000))
    ip = world.state.ip
    assert ip.current_owners(P, 1000) == {2, 3}
    assert ip.record(P, 1) is None
    assert ip.record(P, 2).lease_expiry == ip.record(P, 3).lease_expiry == 1060
    assert tx.output == [
        {"prefix": "10.0.0.0/8", "as_dest": 2, "lease_duration": 60, "transfer_tag": True},
        {"prefix": "10.0.0.0/8", "as_dest": 3, "lease_duration": 60, "transfer_tag": True},
    ]


def test_assign_from_non_owner(world):
    rec = world.state.ip.record(P, 1)
    tx = Transaction.create(Assign(P, 3, (4,), INFINITE_LEASE, 10, True, rec.last_assign), 5, world.keys[3])
    assert world.state.check(tx, world.registry).reason is Reason.NOT_OWNER


def test_lease_exceeds_source(world):
    world.check_apply(assign(world, 1, [2], 200, 0))
    # at t=100 AS2 has 100 s left
    rec = world.state.ip.record(P, 2)
    tx = Transaction.create(Assign(P, 2, (3,), 200, 200, True, rec.last_assign), 100, world.keys[2])
    assert world.state.check(tx, world.registry).reason is Reason.LEASE_EXCEEDS_SOURCE


def test_source_lease_must_match_remaining(world):
    world.check_apply(assign(world, 1, [2], 200, 0))
    rec = world.state.ip.record(P, 2)
    tx = Transaction.create(Assign(P, 2, (3,), 150, 50, True, rec.last_assign), 100, world.keys[2])
    assert world.state.check(tx, world.registry).reason is Reason.SOURCE_LEASE_MISMATCH


def test_last_assign_mismatch(world):
    tx = Transaction.create(Assign(P, 1, (2,), INFINITE_LEASE, 10, True, "00" * 32), 5, world.keys[1])
    assert world.state.check(tx, world.registry).reason is Reason.LAST_ASSIGN_MISMATCH


def test_transfer_not_allowed(world):
    world.check_apply(assign(world, 1, [2], 100, 0, transfer=False))
    tx = assign(world, 2, [3], 10, 10)
    assert world.state.check(tx, world.registry).reason is Reason.TRANSFER_NOT_ALLOWED


def test_dest_must_be_participant(world):
    tx = assign(world, 1, [999], 10, 10)
    assert world.state.check(tx, world.registry).reason is Reason.UNKNOWN_PARTICIPANT


def test_update_before_expiry(world):
    a = world.check_apply(assign(world, 1, [2], 100, 0))
    world.check_apply(build_update(world.state.ip, world.keys[1], 1, a.txid, 80, 50))
    assert world.state.ip.record(P, 2).lease_expiry == 80


def test_update_by_non_assigner(world):
    a = world.check_apply(assign(world, 1, [2], 100, 0))
    tx = build_update(world.state.ip, world.keys[9], 9, a.txid, 80, 50)
    assert world.state.check(tx, world.registry).reason is Reason.NOT_ASSIGNER


def test_update_after_expiry(world):
    a = world.check_apply(assign(world, 1, [2], 100, 0))
    tx = build_update(world.state.ip, world.keys[1], 1, a.txid, 80, 150)
    assert world.state.check(tx, world.registry).reason is Reason.LEASE_EXPIRED


def test_update_extends_and_shrinks():
    w = World([(P, 1)])
    # give AS2 a finite source lease of 200 s, then let AS2 assign onward
    w.check_apply(assign(w, 1, [2], 200, 0))
    a = w.check_apply(assign(w, 2, [3], 100, 0))
    w.check_apply(build_update(w.state.ip, w.keys[2], 2, a.txid, 150, 10))
    assert w.state.ip.record(P, 3).lease_expiry == 150
    w.check_apply(build_update(w.state.ip, w.keys[2], 2, a.txid, 50, 20))
    assert w.state.ip.record(P, 3).lease_expiry == 50
    too_long = build_update(w.state.ip, w.keys[2], 2, a.txid, 201, 30)
    assert w.state.check(too_long, w.registry).reason is Reason.NEW_LEASE_EXCEEDS_SOURCE


def test_update_leaves_graph_alone(world):
    a = world.check_apply(assign(world, 1, [2], 100, 0))
    before = world.state.bgp.graph(P).to_dict()
    world.check_apply(build_update(world.state.ip, world.keys[1], 1, a.txid, 80, 50))
    assert world.state.bgp.graph(P).to_dict() == before


def test_revoke_before_expiry(world):
    a = world.check_apply(assign(world, 1, [2], 100, 0))
    tx = build_revoke(world.state.ip, world.keys[1], 1, a.txid, 50)
    assert world.state.check(tx, world.registry).reason is Reason.LEASE_NOT_EXPIRED


def test_revoke_unknown_assign(world):
    tx = Transaction.create(Revoke(1, "cd" * 32), 5, world.keys[1], output=[])
    assert world.state.check(tx, world.registry).reason is Reason.UNKNOWN_ASSIGN


def test_revoke_restores_infinite_owner(world):
    a = world.check_apply(assign(world, 1, [2, 3], 100, 0))
    world.check_apply(build_revoke(world.state.ip, world.keys[1], 1, a.txid, 100))
    ip = world.state.ip
    assert ip.current_owners(P, 10**9) == {1}
    assert ip.record(P, 1).infinite
    # graph is reset for the restored owner
    assert world.state.bgp.graph(P).edges() == {(1, 0)}


def test_revoke_restored_lease_arithmetic():
    w = World([(P, 1)])
    w.check_apply(assign(w, 1, [2], 100, 0))  # AS2 holds P with source lease 100
    a = w.check_apply(assign(w, 2, [3], 40, 0))
    r = w.check_apply(build_revoke(w.state.ip, w.keys[2], 2, a.txid, 40))
    assert r.output[0]["new_lease_duration"] == 60
    assert w.state.ip.record(P, 2).lease_expiry == 40 + 60


def test_current_owners_after_expiry():
    w = World([(P, 1)])
    assert w.state.ip.current_owners(P, 0) == {1}
    w.check_apply(assign(w, 1, [2], 10, 0))
    assert w.state.ip.current_owners(P, 9) == {2}
    assert w.state.ip.current_owners(P, 10) == set()
    assert LedgerState().ip.current_owners(P, 0) == set()


def test_dump_format(world):
    line = world.state.ip.dump().splitlines()[0]
    assert line == f"10.0.0.0/8\t1\tinf\ttrue\t{world.genesis.transactions[0].txid}"


@settings(max_examples=100, deadline=None)
@given(st.data())
def test_validate_is_pure(data):
    w = World([(P, 1)])
    d = data.draw(st.integers(1, 10**6))
    tx = assign(w, 1, [2], d, 0)
    before = w.state.canonical_dump()
    assert w.state.check(tx, w.registry) == w.state.check(tx, w.registry)
    assert w.state.canonical_dump() == before
