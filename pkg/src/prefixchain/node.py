"""Node engine: chain, state, mempool and peers behind one request handler.

The same :class:`Node` runs inside the HTTP daemon and inside the in-memory
simulator; only the :class:`~prefixchain.overlay.Transport` differs. All
state changes go through methods that take ``self.lock``; network calls are
made without holding it.
"""

from __future__ import annotations

import logging
import threading
import time
from typing import Any, Callable, Iterable
from urllib.parse import parse_qs, urlsplit

from .builders import build_revoke
from .consensus import Resolution, check_genesis, common_prefix, merge_known_prefix, resolve, validate_chain
from .encoding import canonical_encode
from .errors import (
    Aborted,
    AllBootstrapsUnreachable,
    DecodeError,
    InvalidPayload,
    KeyConflict,
    NoWork,
    PrefixChainError,
    Reason,
    Verdict,
)
from .keys import KeyPair, verify
from .ledger import Block, Chain, Transaction, parse_prefix
from .mining import DEFAULT_MAX_SKEW, DEFAULT_MAX_TX, Mempool, assemble, check_difficulty, mine
from .overlay import DEFAULT_KEEPALIVE_TIMEOUT, PeerInfo, PeerTable, Transport, Unreachable, signed_identity
from .state import LedgerState

log = logging.getLogger(__name__)


def notify_signing_bytes(index: int, block_hash: str, miner: int) -> bytes:
    return canonical_encode({"index": index, "hash": block_hash, "miner": miner})


class Node:
    def __init__(
        self,
        asn: int,
        keypair: KeyPair,
        genesis: Block,
        *,
        address: str = "127.0.0.1",
        port: int = 0,
        difficulty: int = 4,
        transport: Transport | None = None,
        clock: Callable[[], float] = time.time,
        max_tx: int = DEFAULT_MAX_TX,
        roster: dict[int, bytes] | None = None,
        max_skew: int = DEFAULT_MAX_SKEW,
        keepalive_timeout: int = DEFAULT_KEEPALIVE_TIMEOUT,
        expected_genesis_hash: str | None = None,
    ):
        verdict = check_genesis(Chain([genesis]), expected_genesis_hash)
        if not verdict:
            raise PrefixChainError(f"unusable genesis block: {verdict.reason} {verdict.detail}")
        self.asn = asn
        self.keypair = keypair
        self.difficulty = check_difficulty(difficulty)
        self.transport = transport
        self.clock = clock
        self.max_tx = max_tx
        self.max_skew = max_skew
        self.keepalive_timeout = keepalive_timeout
        self.identity = signed_identity(keypair, asn, address, port)
        self.peers = PeerTable(asn, keypair.public, roster)
        self.genesis_hash = genesis.hash
        self.chain = Chain([genesis])
        self.state = LedgerState.from_genesis(genesis.transactions[0])
        self.mempool = Mempool(self.state, self.chain.txids())
        self.chain_log: list[dict] = []
        self.lock = threading.RLock()
        self.abort = threading.Event()

    # -- small accessors --------------------------------------------------

    def now(self) -> int:
        return int(self.clock())

    @property
    def registry(self) -> dict[int, bytes]:
        return self.peers.registry

    @property
    def invalid_log(self):
        return self.mempool.invalid_log

    def head(self) -> dict:
        with self.lock:
            return {"head_index": self.chain.head.index, "head_hash": self.chain.head.hash}

    # -- request dispatch -------------------------------------------------

    def handle(self, method: str, target: str, body: Any = None) -> tuple[int, Any]:
        """Serve one request of the wire protocol. Returns ``(status, json_body)``."""
        parts = urlsplit(target)
        path, query = parts.path.rstrip("/") or "/", parse_qs(parts.query)
        route = (method.upper(), path)
        try:
            if route == ("GET", "/identity"):
                return 200, self.identity.record()
            if route == ("POST", "/peers/register"):
                return self.on_register(body)
            if route == ("GET", "/peers"):
                with self.lock:
                    return 200, [self.identity.record()] + [p.record() for _, p in sorted(self.peers.peers.items())]
            if route == ("GET", "/registry"):
                with self.lock:
                    return 200, {str(a): k.hex() for a, k in sorted(self.registry.items())}
            if route == ("GET", "/ping"):
                return 200, {**self.head(), "now": self.now()}
            if route == ("POST", "/transactions"):
                relay = query.get("relay", ["1"])[0] != "0"
                return self.on_transaction(body, relay=relay)
            if route == ("POST", "/blocks/notify"):
                return self.on_notify(body)
            if route == ("GET", "/chain"):
                with self.lock:
                    return 200, self.chain.to_dict()
            if route == ("GET", "/state/ip"):
                with self.lock:
                    return 200, {"dump": self.state.ip.dump(), "state": self.state.ip.to_dict()}
            if route == ("GET", "/state/graph"):
                return self.on_graph(query.get("prefix", [""])[0])
            if route == ("GET", "/log"):
                with self.lock:
                    return 200, {
                        "invalid": [e.to_dict() for e in self.invalid_log],
                        "chains": list(self.chain_log),
                        "key_conflicts": list(self.peers.conflicts),
                    }
            if route == ("GET", "/mempool"):
                with self.lock:
                    return 200, [t.txid for t in self.mempool.transactions()]
        except (DecodeError, InvalidPayload) as exc:
            return 400, {"error": str(exc)}
        return 404, {"error": f"no route {method} {path}"}

    def on_register(self, body: Any) -> tuple[int, Any]:
        try:
            info = PeerInfo.from_record(body)
        except DecodeError as exc:
            return 400, {"error": str(exc)}
        with self.lock:
            try:
                new = self.peers.register(info, self.now())
            except KeyConflict as exc:
                return 409, {"error": str(exc)}
            except ValueError as exc:
                return 400, {"error": str(exc)}
        if new and self.transport is not None:
            # forward first sightings so key-only participants reach the whole mesh
            for p in self.peers.networked():
                if p.asn != info.asn:
                    self.transport.send(p.address, p.port, "/peers/register", info.record())
        return 200, {"registered": new}

    def on_transaction(self, body: Any, relay: bool = True) -> tuple[int, Any]:
        try:
            tx = Transaction.from_dict(body)
        except (DecodeError, InvalidPayload) as exc:
            return 422, {"accepted": False, "reason": str(Reason.MALFORMED), "detail": str(exc)}
        verdict = self.submit(tx, broadcast=relay)
        if verdict:
            return 202, {"accepted": True, "txid": tx.txid}
        return 422, {"accepted": False, "txid": tx.txid, "reason": str(verdict.reason), "detail": verdict.detail}

    def on_graph(self, prefix_text: str) -> tuple[int, Any]:
        try:
            prefix = parse_prefix(prefix_text)
        except InvalidPayload as exc:
            return 400, {"error": str(exc)}
        with self.lock:
            g = self.state.bgp.graph(prefix)
            if g is None:
                return 404, {"error": f"no graph for {prefix}"}
            return 200, {"dot": g.to_dot(), "graph": g.to_dict()}

    def on_notify(self, body: Any) -> tuple[int, Any]:
        try:
            index, block_hash, miner = body["index"], body["hash"], body["miner"]
            sig = bytes.fromhex(body["signature"])
        except (KeyError, TypeError, ValueError):
            return 400, {"error": "malformed notification"}
        with self.lock:
            pubkey = self.registry.get(miner)
            if pubkey is None or not verify(pubkey, notify_signing_bytes(index, block_hash, miner), sig):
                self.chain_log.append({"at": self.now(), "miner": miner, "reason": str(Reason.MINER_SIGNATURE), "source": "notify"})
                return 400, {"error": "bad notification signature"}
            local = self.chain.head
            peer = self.peers.peers.get(miner)
        if block_hash == local.hash or index <= local.index or peer is None or not peer.networked:
            return 200, {"fetched": False}
        outcome = self.sync_from(peer)
        return 200, {"fetched": True, "resolution": outcome.value if outcome else None}

    # -- transactions -----------------------------------------------------

    def submit(self, tx: Transaction, broadcast: bool = True) -> Verdict:
        with self.lock:
            verdict = self.mempool.submit(tx, self.registry, self.now(), self.max_skew)
        if verdict and broadcast:
            self.broadcast_tx(tx)
        return verdict

    def broadcast_tx(self, tx: Transaction) -> None:
        if self.transport is None:
            return
        body = tx.to_dict()
        for p in self.peers.networked():
            self.transport.send(p.address, p.port, "/transactions?relay=0", body)

    # -- mining -----------------------------------------------------------

    def mine_block(self, abort: threading.Event | None = None) -> Block | None:
        """Assemble, mine and append one block. Returns None when there is nothing to do."""
        with self.lock:
            chain = self.chain
            try:
                cand = assemble(self.mempool, chain, self.state, self.registry, self.asn, self.now(), self.max_tx)
            except NoWork:
                return None
            self.abort.clear()
        try:
            block = mine(cand.block, self.difficulty, self.keypair, abort or self.abort, clock=self.clock)
        except Aborted:
            return None
        with self.lock:
            if self.chain is not chain:
                return None
            self.chain = chain.appended(block)
            self.state = cand.state
            self.mempool.rebase(self.state, self.chain, self.registry)
        self.notify_block(block)
        return block

    def notify_block(self, block: Block) -> None:
        if self.transport is None:
            return
        msg = {
            **block.header(),
            "signature": self.keypair.sign(notify_signing_bytes(block.index, block.hash, block.miner)).hex(),
        }
        for p in self.peers.networked():
            self.transport.send(p.address, p.port, "/blocks/notify", msg)

    # -- chains -----------------------------------------------------------

    def fetch_chain(self, peer: PeerInfo) -> Chain:
        status, doc = self.transport.request(peer.address, peer.port, "GET", "/chain")
        if status != 200:
            raise Unreachable(f"GET /chain returned {status}")
        return Chain.from_dict(doc)

    def sync_from(self, peer: PeerInfo) -> Resolution | None:
        """Fetch ``peer``'s chain and adopt it if it is valid and longer."""
        try:
            remote = self.fetch_chain(peer)
        except Unreachable:
            return None
        except (DecodeError, InvalidPayload, ValueError) as exc:
            with self.lock:
                self.chain_log.append({"at": self.now(), "peer": peer.asn, "reason": str(Reason.MALFORMED), "detail": str(exc)})
            return None
        outcome, reason = self.consider_chain(remote, source=peer.asn)
        if reason in (Reason.UNKNOWN_CREATOR, Reason.UNKNOWN_PARTICIPANT, Reason.MINER_SIGNATURE):
            # the chain may name ASes we have not heard of yet; refresh peers once and retry
            if self.gossip_round():
                outcome, _ = self.consider_chain(remote, source=peer.asn)
        return outcome

    def consider_chain(self, remote: Chain, source: int | None = None) -> tuple[Resolution, Reason | None]:
        with self.lock:
            if resolve(self.chain, remote) is Resolution.KEEP:
                return Resolution.KEEP, None
            verdict = validate_chain(remote, self.genesis_hash, self.difficulty, self.registry, known=(self.chain, self.state))
            if not verdict:
                self.chain_log.append({
                    "at": self.now(),
                    "peer": source,
                    "reason": str(verdict.reason),
                    "block": verdict.block_index,
                    "tx": verdict.tx_index,
                    "detail": verdict.detail,
                })
                log.info("AS%d rejected chain from AS%s: %s", self.asn, source, verdict.reason)
                return Resolution.KEEP, verdict.reason
            self._adopt(merge_known_prefix(self.chain, remote), verdict.state)
            return Resolution.ADOPT, None

    def _adopt(self, chain: Chain, state: LedgerState) -> None:
        k = common_prefix(self.chain, chain)
        orphaned = [tx for b in self.chain.blocks[k:] for tx in b.transactions]
        self.chain = chain
        self.state = state
        self.mempool.rebase(state, chain, self.registry, extra=orphaned)
        self.abort.set()

    # -- overlay ----------------------------------------------------------

    def _learn(self, record: Any) -> PeerInfo | None:
        try:
            info = PeerInfo.from_record(record)
            with self.lock:
                if info.asn == self.asn:
                    return None
                new = self.peers.register(info, self.now())
            return info if new else None
        except (DecodeError, ValueError, KeyConflict) as exc:
            log.info("AS%d ignored peer record: %s", self.asn, exc)
            return None

    def _register_with(self, info: PeerInfo) -> bool:
        try:
            status, _ = self.transport.request(info.address, info.port, "POST", "/peers/register", self.identity.record())
        except Unreachable:
            return False
        return status == 200

    def join(self, bootstrap: Iterable[tuple[str, int]]) -> PeerTable:
        """Peer with the bootstrap nodes, learn their peers, register everywhere, then sync."""
        reached = 0
        for address, port in bootstrap:
            try:
                status, ident = self.transport.request(address, port, "GET", "/identity")
                if status != 200:
                    continue
                _, records = self.transport.request(address, port, "GET", "/peers")
            except Unreachable:
                continue
            reached += 1
            self._learn(ident)
            self._register_with(PeerInfo.from_record(ident))
            for rec in records or []:
                self._learn(rec)
        if not reached:
            raise AllBootstrapsUnreachable("no bootstrap node answered")
        for p in self.peers.networked():
            self._register_with(p)
        self.sync_best()
        return self.peers

    def gossip_round(self) -> int:
        """Pull peer lists from every live peer; register with newly found ones."""
        found = 0
        for p in self.peers.networked():
            try:
                status, records = self.transport.request(p.address, p.port, "GET", "/peers")
            except Unreachable:
                continue
            if status != 200:
                continue
            for rec in records:
                info = self._learn(rec)
                if info is not None:
                    found += 1
                    if info.networked:
                        self._register_with(info)
        return found

    def sync_best(self) -> None:
        best, best_len = None, len(self.chain)
        for p in self.peers.networked():
            try:
                status, head = self.transport.request(p.address, p.port, "GET", "/ping")
            except Unreachable:
                continue
            if status == 200 and head["head_index"] + 1 > best_len:
                best, best_len = p, head["head_index"] + 1
        if best is not None:
            self.sync_from(best)

    def keepalive_sweep(self, now: int | None = None, timeout: int | None = None) -> PeerTable:
        """Ping every networked peer; mark silent ones dead and pull longer chains."""
        now = self.now() if now is None else now
        timeout = self.keepalive_timeout if timeout is None else timeout
        for p in self.peers.networked(alive_only=False):
            try:
                status, head = self.transport.request(p.address, p.port, "GET", "/ping")
            except Unreachable:
                status, head = None, None
            with self.lock:
                if status == 200:
                    self.peers.mark(p.asn, alive=True, seen=now)
                elif now - p.last_seen > timeout:
                    self.peers.mark(p.asn, alive=False)
                longer = status == 200 and head["head_index"] > self.chain.head.index
            if longer:
                self.sync_from(self.peers.peers[p.asn])
        return self.peers

    def auto_revoke(self) -> list[Transaction]:
        """Emit Revoke transactions for this node's Assigns whose leases have run out."""
        now = self.now()
        emitted = []
        with self.lock:
            pending = self.mempool.state.ip
            candidates = [e for e in pending.assigns.values() if e.payload.as_source == self.asn]
            txs = []
            for entry in candidates:
                tx = build_revoke(pending, self.keypair, self.asn, entry.txid, now)
                if pending.validate_revoke(tx, now):
                    txs.append(tx)
        for tx in txs:
            if self.submit(tx):
                emitted.append(tx)
        return emitted
