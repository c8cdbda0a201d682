"""Mempool, block assembly and proof-of-work mining."""

from __future__ import annotations

import threading
import time
from collections import OrderedDict
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Mapping

from . import pow as _pow
from .errors import Aborted, NoWork, Reason, Verdict
from .keys import KeyPair
from .ledger import Block, Chain, Transaction, TxId
from .state import LedgerState

DEFAULT_MAX_TX = 100
DEFAULT_CHECK_INTERVAL = 1024
#: How far into the future a transaction timestamp may lie on arrival.
DEFAULT_MAX_SKEW = 300


def check_difficulty(difficulty: int) -> int:
    if type(difficulty) is not int or not 1 <= difficulty <= 16:
        raise ValueError(f"difficulty must be an integer in 1..16, got {difficulty!r}")
    return difficulty


@dataclass(frozen=True)
class LogEntry:
    txid: str
    tx_type: str
    creator: int
    reason: str
    detail: str
    received_at: int

    def to_dict(self) -> dict:
        return {
            "txid": self.txid,
            "type": self.tx_type,
            "creator": self.creator,
            "reason": self.reason,
            "detail": self.detail,
            "received_at": self.received_at,
        }


class Mempool:
    """FIFO buffer of validated transactions.

    ``state`` is the chain head state with every pending transaction applied
    in order, so a transaction may build on one that is not yet mined.
    """

    def __init__(self, base_state: LedgerState, chain_txids: Iterable[TxId] = ()):
        self.pending: OrderedDict[TxId, Transaction] = OrderedDict()
        self.chain_txids: set[TxId] = set(chain_txids)
        self.state = base_state.copy()
        self.invalid_log: list[LogEntry] = []

    def __len__(self) -> int:
        return len(self.pending)

    def __contains__(self, txid: TxId) -> bool:
        return txid in self.pending

    def transactions(self) -> list[Transaction]:
        return list(self.pending.values())

    def log_rejection(self, tx: Transaction, verdict: Verdict, now: int) -> None:
        self.invalid_log.append(
            LogEntry(tx.txid, str(tx.tx_type), tx.creator, str(verdict.reason), verdict.detail, now)
        )

    def submit(
        self,
        tx: Transaction,
        registry: Mapping[int, bytes],
        now: int,
        max_skew: int = DEFAULT_MAX_SKEW,
    ) -> Verdict:
        """Admit ``tx`` if it is new and valid on top of the pending state; log it otherwise."""
        if tx.txid in self.pending or tx.txid in self.chain_txids:
            verdict = Verdict.invalid(Reason.DUPLICATE)
        elif tx.timestamp > now + max_skew:
            verdict = Verdict.invalid(Reason.FUTURE_TIMESTAMP, f"timestamp {tx.timestamp} ahead of {now}")
        else:
            verdict = self.state.check(tx, registry)
        if not verdict:
            self.log_rejection(tx, verdict, now)
            return verdict
        self.state.apply(tx)
        self.pending[tx.txid] = tx
        return verdict

    def rebase(
        self,
        base_state: LedgerState,
        chain: Chain,
        registry: Mapping[int, bytes],
        extra: Iterable[Transaction] = (),
    ) -> list[Transaction]:
        """Re-filter pending transactions against a new chain head.

        ``extra`` (transactions from orphaned local blocks) are considered
        first. Returns the transactions that were dropped as no longer valid.
        """
        self.chain_txids = chain.txids()
        candidates = list(extra) + list(self.pending.values())
        self.pending = OrderedDict()
        self.state = base_state.copy()
        dropped = []
        for tx in candidates:
            if tx.txid in self.chain_txids or tx.txid in self.pending:
                continue
            if self.state.check(tx, registry):
                self.state.apply(tx)
                self.pending[tx.txid] = tx
            else:
                dropped.append(tx)
        return dropped


@dataclass
class Candidate:
    block: Block
    state: LedgerState


def assemble(
    mempool: Mempool,
    chain: Chain,
    base_state: LedgerState,
    registry: Mapping[int, bytes],
    miner: int,
    timestamp: int,
    max_tx_per_block: int = DEFAULT_MAX_TX,
) -> Candidate:
    """Build an unmined block from the mempool head, re-validating in FIFO order.

    Transactions invalidated by earlier ones in the same block are skipped
    and stay in the mempool.
    """
    if not mempool.pending:
        raise NoWork("mempool is empty")
    scratch = base_state.copy()
    chosen = []
    for tx in mempool.pending.values():
        if len(chosen) >= max_tx_per_block:
            break
        if tx.txid in mempool.chain_txids:
            continue
        if scratch.check(tx, registry):
            scratch.apply(tx)
            chosen.append(tx)
    if not chosen:
        raise NoWork("no pending transaction is valid on the current head")
    block = Block(len(chain), tuple(chosen), timestamp, chain.head.hash, miner)
    return Candidate(block, scratch)


def mine(
    candidate: Block,
    difficulty: int,
    keypair: KeyPair,
    abort_signal: threading.Event | None = None,
    check_interval: int = DEFAULT_CHECK_INTERVAL,
    clock: Callable[[], float] = time.time,
    search: Callable | None = None,
) -> Block:
    """Search nonces upward from 0 until the block hash meets ``difficulty``; sign the result."""
    check_difficulty(difficulty)
    search = search or _pow.search
    prefix, suffix = candidate.preimage_parts()
    start = 0
    while True:
        if abort_signal is not None and abort_signal.is_set():
            raise Aborted("a better chain arrived")
        nonce = search(prefix, suffix, difficulty, start, check_interval)
        if nonce >= 0:
            break
        start += check_interval
    unsigned = replace(candidate, nonce=nonce, hash=candidate.compute_hash(nonce), mined_timestamp=int(clock()))
    return replace(unsigned, signature=keypair.sign(unsigned.signing_bytes()))


def verify_pow(block: Block, difficulty: int) -> bool:
    if block.is_genesis:
        return True
    if block.compute_hash() != block.hash:
        return False
    return _pow.meets_target(bytes.fromhex(block.hash), difficulty)
