"""Helpers that build correctly-formed, signed transactions from current state."""

from __future__ import annotations

from typing import Iterable

from .errors import PreconditionViolated
from .ipalloc import IpAllocationState
from .keys import KeyPair
from .ledger import Announce, Assign, Prefix, Revoke, Transaction, TxId, Update, Withdraw


def build_assign(
    ip: IpAllocationState,
    keypair: KeyPair,
    as_source: int,
    prefix: Prefix,
    as_dest: Iterable[int],
    lease_duration: int,
    transfer_tag: bool,
    timestamp: int,
) -> Transaction:
    rec = ip.record(prefix, as_source)
    if rec is None:
        raise PreconditionViolated(f"AS{as_source} holds no record for {prefix}")
    payload = Assign(
        prefix, as_source, tuple(as_dest), rec.remaining(timestamp), lease_duration, transfer_tag, rec.last_assign
    )
    return Transaction.create(payload, timestamp, keypair)


def build_update(ip: IpAllocationState, keypair: KeyPair, as_source: int, assign_tran: TxId, new_lease: int, timestamp: int) -> Transaction:
    return Transaction.create(Update(as_source, assign_tran, new_lease), timestamp, keypair, lookup_assign=ip.lookup_assign)


def build_revoke(ip: IpAllocationState, keypair: KeyPair, as_source: int, assign_tran: TxId, timestamp: int) -> Transaction:
    return Transaction.create(Revoke(as_source, assign_tran), timestamp, keypair, lookup_assign=ip.lookup_assign)


def build_announce(
    keypair: KeyPair,
    as_source: int,
    prefix: Prefix,
    learned_from: Iterable[int],
    advertised_to: Iterable[int],
    timestamp: int,
) -> Transaction:
    return Transaction.create(Announce(prefix, as_source, tuple(learned_from), tuple(advertised_to)), timestamp, keypair)


def build_withdraw(keypair: KeyPair, as_source: int, prefix: Prefix, timestamp: int) -> Transaction:
    return Transaction.create(Withdraw(prefix, as_source), timestamp, keypair)
