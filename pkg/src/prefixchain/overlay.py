"""Peer identities, the peer table and the transport abstraction.

Nodes exchange self-signed identity records (address, port, ASN, public
key). A record with port 0 describes a key-only participant, e.g. an AS
whose key was published through a registry roster but that runs no node:
it counts as a network member for validation but is never contacted.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Iterable, Mapping, Protocol

from .encoding import canonical_encode
from .errors import DecodeError, KeyConflict
from .keys import KeyPair, verify
from .ledger import is_asn

log = logging.getLogger(__name__)

DEFAULT_KEEPALIVE_INTERVAL = 10
DEFAULT_KEEPALIVE_TIMEOUT = 30


class Unreachable(Exception):
    """A peer did not answer (connection refused, timeout, severed link)."""


class Transport(Protocol):
    def request(self, address: str, port: int, method: str, path: str, body: Any = None) -> tuple[int, Any]:
        """Synchronous request; raises :class:`Unreachable`."""

    def send(self, address: str, port: int, path: str, body: Any) -> None:
        """Fire-and-forget POST; delivery is best effort."""


@dataclass(frozen=True)
class PeerInfo:
    asn: int
    address: str
    port: int
    pubkey: bytes
    signature: bytes = b""
    last_seen: int = 0
    alive: bool = True

    @property
    def networked(self) -> bool:
        return self.port > 0

    def identity(self) -> dict:
        return {"asn": self.asn, "address": self.address, "port": self.port, "pubkey": self.pubkey.hex()}

    def signing_bytes(self) -> bytes:
        return canonical_encode(self.identity())

    def verify_signature(self) -> bool:
        try:
            return verify(self.pubkey, self.signing_bytes(), self.signature)
        except ValueError:
            return False

    def record(self) -> dict:
        return {**self.identity(), "signature": self.signature.hex()}

    def to_dict(self) -> dict:
        return {**self.record(), "last_seen": self.last_seen, "alive": self.alive}

    @classmethod
    def from_record(cls, d: Any) -> PeerInfo:
        try:
            if not isinstance(d, dict):
                raise TypeError("record must be an object")
            asn, port = d["asn"], d["port"]
            if not is_asn(asn) or type(port) is not int or not 0 <= port < 65536:
                raise ValueError("bad asn or port")
            return cls(asn, str(d["address"]), port, bytes.fromhex(d["pubkey"]), bytes.fromhex(d["signature"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise DecodeError(f"bad identity record: {exc}") from exc


def signed_identity(keypair: KeyPair, asn: int, address: str, port: int) -> PeerInfo:
    unsigned = PeerInfo(asn, address, port, keypair.public)
    return replace(unsigned, signature=keypair.sign(unsigned.signing_bytes()))


class PeerTable:
    """Known peers keyed by ASN, plus the permanent ASN-to-key registry.

    Keys stay in the registry even after a peer is marked dead, so blocks it
    mined remain verifiable.
    """

    def __init__(self, self_asn: int, self_key: bytes, roster: Mapping[int, bytes] | None = None):
        self.self_asn = self_asn
        self.peers: dict[int, PeerInfo] = {}
        self.registry: dict[int, bytes] = {self_asn: self_key}
        self.pinned: dict[int, bytes] = dict(roster or {})
        self.registry.update(self.pinned)
        self.conflicts: list[dict] = []

    def __contains__(self, asn: int) -> bool:
        return asn in self.peers

    def __len__(self) -> int:
        return len(self.peers)

    def register(self, info: PeerInfo, now: int = 0) -> bool:
        """Add or refresh a peer. Returns True if the ASN was new.

        Raises ValueError for a bad self-signature and KeyConflict when the
        ASN is already bound to a different key.
        """
        if not info.verify_signature():
            raise ValueError(f"identity record for AS{info.asn} is not self-signed correctly")
        if info.asn == self.self_asn:
            if info.pubkey != self.registry[self.self_asn]:
                self._conflict(info, now)
            return False
        bound = self.registry.get(info.asn)
        if bound is not None and bound != info.pubkey:
            self._conflict(info, now)
        self.registry[info.asn] = info.pubkey
        is_new = info.asn not in self.peers
        self.peers[info.asn] = replace(info, last_seen=now, alive=True)
        return is_new

    def _conflict(self, info: PeerInfo, now: int) -> None:
        self.conflicts.append({"asn": info.asn, "address": info.address, "port": info.port, "at": now})
        log.warning("rejected key change for AS%d from %s:%d", info.asn, info.address, info.port)
        raise KeyConflict(f"AS{info.asn} is bound to a different key")

    def networked(self, alive_only: bool = True) -> list[PeerInfo]:
        return [
            p for _, p in sorted(self.peers.items())
            if p.networked and (p.alive or not alive_only)
        ]

    def mark(self, asn: int, *, alive: bool, seen: int | None = None) -> None:
        p = self.peers[asn]
        self.peers[asn] = replace(p, alive=alive, last_seen=p.last_seen if seen is None else seen)

    def find(self, address: str, port: int) -> PeerInfo | None:
        for p in self.peers.values():
            if p.address == address and p.port == port:
                return p
        return None

    def roster(self) -> set[int]:
        return set(self.registry)

    def to_list(self) -> list[dict]:
        return [self.peers[a].to_dict() for a in sorted(self.peers)]


def load_roster(path: str | Path) -> dict[int, bytes]:
    """Read a static ``{"<asn>": "<pubkey hex>"}`` registry file."""
    doc = json.loads(Path(path).read_text())
    out = {}
    for k, v in doc.items():
        asn = int(k)
        if not is_asn(asn):
            raise ValueError(f"bad ASN {k!r} in roster")
        out[asn] = bytes.fromhex(v)
    return out


def participant_records(keyring: Mapping[int, KeyPair], asns: Iterable[int]) -> list[PeerInfo]:
    """Key-only identity records (port 0) for ASes that run no node."""
    return [signed_identity(keyring[a], a, "0.0.0.0", 0) for a in asns]
