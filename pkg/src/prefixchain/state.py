"""Combined ledger state and full per-transaction validation.

:class:`LedgerState` is what a chain replay folds into. ``check`` runs every
rule a transaction must pass (identity, signature, type-specific checks,
output consistency); ``apply`` mutates the state and keeps each prefix graph
in sync with ownership changes.
"""

from __future__ import annotations

from typing import Mapping

from .bgppath import BgpPathState
from .encoding import canonical_encode
from .errors import Reason, Verdict
from .ipalloc import IpAllocationState
from .keys import verify
from .ledger import Transaction, TxType, derive_output


class LedgerState:
    def __init__(self, ip: IpAllocationState | None = None, bgp: BgpPathState | None = None):
        self.ip = ip or IpAllocationState()
        self.bgp = bgp or BgpPathState()

    def copy(self) -> LedgerState:
        return LedgerState(self.ip.copy(), self.bgp.copy())

    @classmethod
    def from_genesis(cls, genesis_tx: Transaction) -> LedgerState:
        state = cls()
        state.ip.apply_genesis_assign(genesis_tx)
        for prefix in state.ip.prefixes():
            state.bgp.sync_origins(prefix, sorted(state.ip.holders(prefix)))
        return state

    def check(self, tx: Transaction, registry: Mapping[int, bytes], now: int | None = None) -> Verdict:
        """Validate ``tx`` against this state. ``now`` defaults to the tx timestamp."""
        if now is None:
            now = tx.timestamp
        if tx.tx_type is TxType.GENESIS_ASSIGN:
            return Verdict.invalid(Reason.GENESIS_NOT_ALLOWED)
        if tx.input.tx_type is not tx.tx_type:
            return Verdict.invalid(Reason.INVALID_PAYLOAD)
        if tx.txid != tx.expected_txid():
            return Verdict.invalid(Reason.TXID_MISMATCH)
        if tx.creator != tx.input.creator_field:
            return Verdict.invalid(Reason.CREATOR_MISMATCH)
        pubkey = registry.get(tx.creator)
        if pubkey is None:
            return Verdict.invalid(Reason.UNKNOWN_CREATOR, f"no key registered for AS{tx.creator}")
        if not verify(pubkey, tx.signing_bytes(), tx.signature):
            return Verdict.invalid(Reason.BAD_SIGNATURE, f"signature does not verify for AS{tx.creator}")

        t = tx.tx_type
        if t is TxType.ASSIGN:
            verdict = self.ip.validate_assign(tx, now, registry)
        elif t is TxType.UPDATE:
            verdict = self.ip.validate_update(tx, now)
        elif t is TxType.REVOKE:
            verdict = self.ip.validate_revoke(tx, now)
        elif t is TxType.ANNOUNCE:
            verdict = self.bgp.validate_announce(tx, registry)
        else:
            verdict = self.bgp.validate_withdraw(tx)
        if not verdict:
            return verdict
        if tx.output != derive_output(tx.input, self.ip.lookup_assign):
            return Verdict.invalid(Reason.OUTPUT_MISMATCH)
        return verdict

    def apply(self, tx: Transaction) -> None:
        t = tx.tx_type
        if t is TxType.ASSIGN:
            self.ip.apply_assign(tx)
            self.bgp.sync_origins(tx.input.prefix, sorted(self.ip.holders(tx.input.prefix)))
        elif t is TxType.UPDATE:
            self.ip.apply_update(tx)
        elif t is TxType.REVOKE:
            self.ip.apply_revoke(tx)
            prefix = self.ip.assigns[tx.input.assign_tran].payload.prefix
            self.bgp.sync_origins(prefix, sorted(self.ip.holders(prefix)), warn_stale=True)
        elif t is TxType.ANNOUNCE:
            self.bgp.apply_announce(tx)
        elif t is TxType.WITHDRAW:
            self.bgp.apply_withdraw(tx)
        else:
            raise ValueError(f"cannot apply {t} outside genesis")

    def to_dict(self) -> dict:
        return {"ip": self.ip.to_dict(), "bgp": self.bgp.to_dict()}

    def canonical_dump(self) -> bytes:
        return canonical_encode(self.to_dict())
