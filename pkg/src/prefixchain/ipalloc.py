"""Prefix ownership state and the IP Allocation transaction rules.

Ownership is exact-match per prefix: a record for 10.0.0.0/8 says nothing
about 10.1.0.0/16. Expired records stay in place until an explicit Revoke
reclaims them; queries filter by time instead.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Container

from .errors import NonEmptyState, PreconditionViolated, Reason, Verdict
from .ledger import (
    INFINITE_LEASE,
    Assign,
    GenesisAssign,
    Prefix,
    Revoke,
    Transaction,
    TxId,
    Update,
    prefix_key,
    restored_lease,
)


@dataclass(frozen=True)
class OwnershipRecord:
    prefix: Prefix
    owner: int
    lease_expiry: int
    remaining_source_lease: int
    transfer_allowed: bool
    last_assign: TxId

    @property
    def infinite(self) -> bool:
        return self.lease_expiry == INFINITE_LEASE

    def remaining(self, at: int) -> int:
        if self.infinite:
            return INFINITE_LEASE
        return max(0, self.lease_expiry - at)

    def alive(self, at: int) -> bool:
        return self.infinite or self.lease_expiry > at

    def to_dict(self) -> dict:
        return {
            "prefix": str(self.prefix),
            "owner": self.owner,
            "lease_expiry": self.lease_expiry,
            "remaining_source_lease": self.remaining_source_lease,
            "transfer_allowed": self.transfer_allowed,
            "last_assign": self.last_assign,
        }


@dataclass(frozen=True)
class AssignEntry:
    """An applied Assign plus the record its source held just before it."""

    txid: TxId
    payload: Assign
    timestamp: int
    prior: OwnershipRecord


def _expiry(start: int, duration: int) -> int:
    if duration == INFINITE_LEASE:
        return INFINITE_LEASE
    return min(start + duration, INFINITE_LEASE - 1)


class IpAllocationState:
    def __init__(self):
        self.records: dict[Prefix, dict[int, OwnershipRecord]] = {}
        self.assigns: dict[TxId, AssignEntry] = {}
        self.genesis_txid: TxId | None = None

    def copy(self) -> IpAllocationState:
        new = IpAllocationState()
        new.records = {p: dict(owners) for p, owners in self.records.items()}
        new.assigns = dict(self.assigns)
        new.genesis_txid = self.genesis_txid
        return new

    # -- queries ----------------------------------------------------------

    def prefixes(self) -> list[Prefix]:
        return sorted(self.records, key=prefix_key)

    def record(self, prefix: Prefix, owner: int) -> OwnershipRecord | None:
        return self.records.get(prefix, {}).get(owner)

    def holders(self, prefix: Prefix) -> set[int]:
        """Every ASN with a record for ``prefix``, expired or not."""
        return set(self.records.get(prefix, ()))

    def current_owners(self, prefix: Prefix, now: int) -> set[int]:
        return {a for a, r in self.records.get(prefix, {}).items() if r.alive(now)}

    def lookup_assign(self, txid: TxId) -> Assign | None:
        entry = self.assigns.get(txid)
        return entry.payload if entry else None

    # -- genesis ----------------------------------------------------------

    def apply_genesis_assign(self, tx: Transaction) -> None:
        if self.records or self.assigns or self.genesis_txid is not None:
            raise NonEmptyState("genesis can only be applied to an empty state")
        payload: GenesisAssign = tx.input
        self.genesis_txid = tx.txid
        for prefix, asn in payload.allocations:
            self.records.setdefault(prefix, {})[asn] = OwnershipRecord(
                prefix, asn, INFINITE_LEASE, INFINITE_LEASE, True, tx.txid
            )

    # -- assign -----------------------------------------------------------

    def validate_assign(self, tx: Transaction, now: int, roster: Container[int]) -> Verdict:
        p: Assign = tx.input
        rec = self.record(p.prefix, p.as_source)
        if rec is None:
            return Verdict.invalid(Reason.NOT_OWNER, f"AS{p.as_source} holds no record for {p.prefix}")
        if not rec.alive(now):
            return Verdict.invalid(Reason.LEASE_EXPIRED, f"lease of AS{p.as_source} on {p.prefix} expired")
        if p.last_assign != rec.last_assign:
            return Verdict.invalid(Reason.LAST_ASSIGN_MISMATCH)
        if rec.remaining(now) < p.lease_duration:
            return Verdict.invalid(
                Reason.LEASE_EXCEEDS_SOURCE, f"remaining {rec.remaining(now)} < requested {p.lease_duration}"
            )
        if p.source_lease != rec.remaining(tx.timestamp):
            return Verdict.invalid(
                Reason.SOURCE_LEASE_MISMATCH, f"source_lease {p.source_lease} != {rec.remaining(tx.timestamp)}"
            )
        if not rec.transfer_allowed:
            return Verdict.invalid(Reason.TRANSFER_NOT_ALLOWED)
        holders = self.holders(p.prefix)
        for d in p.as_dest:
            if d not in roster:
                return Verdict.invalid(Reason.UNKNOWN_PARTICIPANT, f"AS{d} is not in the network")
            if d in holders:
                return Verdict.invalid(Reason.DEST_ALREADY_OWNER, f"AS{d} already holds {p.prefix}")
        return Verdict.valid()

    def apply_assign(self, tx: Transaction) -> None:
        p: Assign = tx.input
        owners = self.records.get(p.prefix, {})
        prior = owners.get(p.as_source)
        if prior is None:
            raise PreconditionViolated(f"AS{p.as_source} does not hold {p.prefix}")
        del owners[p.as_source]
        expiry = _expiry(tx.timestamp, p.lease_duration)
        for d in p.as_dest:
            owners[d] = OwnershipRecord(p.prefix, d, expiry, p.source_lease, p.transfer_tag, tx.txid)
        self.assigns[tx.txid] = AssignEntry(tx.txid, p, tx.timestamp, prior)

    # -- update / revoke --------------------------------------------------

    def _check_reference(self, p: Update | Revoke) -> tuple[Verdict, AssignEntry | None, list[OwnershipRecord]]:
        entry = self.assigns.get(p.assign_tran)
        if entry is None:
            return Verdict.invalid(Reason.UNKNOWN_ASSIGN, f"no Assign {p.assign_tran[:12]}"), None, []
        if p.as_source != entry.payload.as_source:
            return Verdict.invalid(Reason.NOT_ASSIGNER, f"AS{p.as_source} did not make that Assign"), entry, []
        recs = []
        for d in entry.payload.as_dest:
            rec = self.record(entry.payload.prefix, d)
            if rec is None or rec.last_assign != p.assign_tran:
                return Verdict.invalid(Reason.ASSIGN_SUPERSEDED, f"AS{d} no longer holds it under this Assign"), entry, []
            recs.append(rec)
        return Verdict.valid(), entry, recs

    def validate_update(self, tx: Transaction, now: int) -> Verdict:
        p: Update = tx.input
        verdict, entry, recs = self._check_reference(p)
        if not verdict:
            return verdict
        if not all(r.alive(now) for r in recs):
            return Verdict.invalid(Reason.LEASE_EXPIRED)
        if p.new_lease > entry.payload.source_lease:
            return Verdict.invalid(Reason.NEW_LEASE_EXCEEDS_SOURCE)
        return Verdict.valid()

    def apply_update(self, tx: Transaction) -> None:
        p: Update = tx.input
        entry = self.assigns[p.assign_tran]
        owners = self.records[entry.payload.prefix]
        expiry = _expiry(entry.timestamp, p.new_lease)
        for d in entry.payload.as_dest:
            owners[d] = replace(owners[d], lease_expiry=expiry)

    def validate_revoke(self, tx: Transaction, now: int) -> Verdict:
        p: Revoke = tx.input
        verdict, entry, recs = self._check_reference(p)
        if not verdict:
            return verdict
        if any(r.alive(now) for r in recs):
            return Verdict.invalid(Reason.LEASE_NOT_EXPIRED)
        if self.record(entry.payload.prefix, p.as_source) is not None:
            return Verdict.invalid(Reason.SOURCE_ALREADY_OWNER)
        return Verdict.valid()

    def apply_revoke(self, tx: Transaction) -> None:
        p: Revoke = tx.input
        entry = self.assigns.get(p.assign_tran)
        if entry is None:
            raise PreconditionViolated(f"unknown Assign {p.assign_tran}")
        original = entry.payload
        owners = self.records.setdefault(original.prefix, {})
        for d in original.as_dest:
            owners.pop(d, None)
        lease = restored_lease(original)
        owners[p.as_source] = replace(entry.prior, lease_expiry=_expiry(tx.timestamp, lease))

    # -- dumps ------------------------------------------------------------

    def dump(self) -> str:
        """Line-oriented dump: prefix, owner, expiry, transfer flag, last assign txid."""
        lines = []
        for prefix in self.prefixes():
            for owner in sorted(self.records[prefix]):
                r = self.records[prefix][owner]
                expiry = "inf" if r.infinite else str(r.lease_expiry)
                flag = "true" if r.transfer_allowed else "false"
                lines.append(f"{prefix}\t{owner}\t{expiry}\t{flag}\t{r.last_assign}")
        return "".join(line + "\n" for line in lines)

    def to_dict(self) -> dict:
        return {
            "genesis_txid": self.genesis_txid,
            "records": [
                self.records[p][o].to_dict() for p in self.prefixes() for o in sorted(self.records[p])
            ],
            "assigns": [
                {"txid": e.txid, "timestamp": e.timestamp, "input": e.payload.to_dict(), "prior": e.prior.to_dict()}
                for e in sorted(self.assigns.values(), key=lambda e: e.txid)
            ],
        }
