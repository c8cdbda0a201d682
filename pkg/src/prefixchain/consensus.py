"""Chain validation with state replay, and longest-chain conflict resolution."""

from __future__ import annotations

from enum import Enum
from typing import Mapping

from .encoding import ZERO_HASH
from .errors import ChainVerdict, Reason
from .keys import verify
from .ledger import Chain, TxType, derive_output
from .mining import verify_pow
from .state import LedgerState


def _fail(reason: Reason, block: int | None = None, tx: int | None = None, detail: str = "") -> ChainVerdict:
    return ChainVerdict(False, reason, block, tx, detail)


def check_genesis(chain: Chain, expected_genesis_hash: str | None = None) -> ChainVerdict:
    g = chain.genesis
    if g.index != 0 or g.previous_hash != ZERO_HASH:
        return _fail(Reason.LINKAGE, 0, detail="first block is not a genesis block")
    if len(g.transactions) != 1 or g.transactions[0].tx_type is not TxType.GENESIS_ASSIGN:
        return _fail(Reason.MALFORMED, 0, detail="genesis must hold exactly one GenesisAssign")
    tx = g.transactions[0]
    if tx.txid != tx.expected_txid():
        return _fail(Reason.TXID_MISMATCH, 0, 0)
    if g.compute_hash() != g.hash:
        return _fail(Reason.HASH_MISMATCH, 0)
    if expected_genesis_hash is not None and g.hash != expected_genesis_hash:
        return _fail(Reason.GENESIS_MISMATCH, 0)
    if g.nonce != 0 or g.signature or g.miner != tx.creator or g.mined_timestamp != g.timestamp:
        return _fail(Reason.MALFORMED, 0, detail="genesis miner fields are fixed")
    if tx.signature or tx.output != derive_output(tx.input):
        return _fail(Reason.OUTPUT_MISMATCH, 0, 0)
    return ChainVerdict(True)


def replay(
    chain: Chain,
    registry: Mapping[int, bytes],
    start: tuple[int, LedgerState] | None = None,
) -> ChainVerdict:
    """Fold every transaction through validate/apply; the verdict carries the final state.

    ``start=(k, state)`` resumes from a state already covering blocks ``[0, k)``.
    """
    if start is None:
        try:
            state = LedgerState.from_genesis(chain.genesis.transactions[0])
        except Exception as exc:  # noqa: BLE001 - any genesis defect makes the chain invalid
            return _fail(Reason.MALFORMED, 0, 0, str(exc))
        first = 1
    else:
        first, state = start[0], start[1].copy()
    for bi in range(first, len(chain)):
        for ti, tx in enumerate(chain[bi].transactions):
            verdict = state.check(tx, registry)
            if not verdict:
                return _fail(verdict.reason, bi, ti, verdict.detail)
            state.apply(tx)
    return ChainVerdict(True, state=state)


def validate_chain(
    chain: Chain,
    expected_genesis_hash: str | None,
    difficulty: int,
    key_registry: Mapping[int, bytes],
    known: tuple[Chain, LedgerState] | None = None,
) -> ChainVerdict:
    """Full validation: genesis, linkage, PoW, miner signatures, txid uniqueness, replay.

    If ``known`` holds a previously validated chain and its head state, the
    common prefix (matched by block hash) is not re-checked. The caller must
    then keep its own copies of those blocks; see :func:`merge_known_prefix`.
    """
    verdict = check_genesis(chain, expected_genesis_hash)
    if not verdict:
        return verdict

    skip = 1
    if known is not None:
        kchain, _ = known
        k = common_prefix(kchain, chain)
        if k == len(kchain) and k > 1:
            skip = k
    seen = set() if skip == 1 else known[0].txids()
    if skip == 1:
        seen.add(chain.genesis.transactions[0].txid)

    for i in range(skip, len(chain)):
        b, prev = chain[i], chain[i - 1]
        if b.index != i or b.previous_hash != prev.hash:
            return _fail(Reason.LINKAGE, i)
        if not b.transactions:
            return _fail(Reason.EMPTY_BLOCK, i)
        if b.compute_hash() != b.hash:
            return _fail(Reason.HASH_MISMATCH, i)
        if not verify_pow(b, difficulty):
            return _fail(Reason.POW, i)
        pubkey = key_registry.get(b.miner)
        if pubkey is None or not verify(pubkey, b.signing_bytes(), b.signature):
            return _fail(Reason.MINER_SIGNATURE, i)
        for ti, tx in enumerate(b.transactions):
            if tx.txid in seen:
                return _fail(Reason.DUPLICATE, i, ti)
            seen.add(tx.txid)

    if skip > 1:
        return replay(chain, key_registry, start=(skip, known[1]))
    return replay(chain, key_registry)


def common_prefix(a: Chain, b: Chain) -> int:
    n = 0
    for x, y in zip(a, b):
        if x.hash != y.hash:
            break
        n += 1
    return n


def merge_known_prefix(local: Chain, remote: Chain) -> Chain:
    """Replace the hash-identical prefix of ``remote`` with the locally held blocks."""
    k = common_prefix(local, remote)
    return Chain(local.blocks[:k] + remote.blocks[k:])


class Resolution(str, Enum):
    KEEP = "keep"
    ADOPT = "adopt"


def resolve(local_chain: Chain, remote_chain: Chain) -> Resolution:
    """Longest valid chain wins; equal length keeps the incumbent."""
    if len(remote_chain) > len(local_chain):
        return Resolution.ADOPT
    return Resolution.KEEP
