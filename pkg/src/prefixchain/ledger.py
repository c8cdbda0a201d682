"""Blocks, transactions and their typed payloads.

All ledger objects are frozen dataclasses. ``to_dict``/``from_dict`` map them
onto the canonical wire schema; ``from_dict`` is strict and raises
:class:`DecodeError` on anything that would not re-encode to the same bytes.
"""

from __future__ import annotations

import ipaddress
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Callable, Iterable, Union

from .encoding import ZERO_HASH, canonical_decode, canonical_encode, content_hash
from .errors import DecodeError, DuplicateAllocation, InvalidPayload
from .keys import KeyPair

Prefix = Union[ipaddress.IPv4Network, ipaddress.IPv6Network]
TxId = str

ASN_MAX = 2**32 - 1
#: Lease sentinel for ownership that never expires (genesis allocations).
INFINITE_LEASE = 2**64 - 1

IANA_ASN = 0xFFFF0000
RIR_ASNS = {
    "AFRINIC": 0xFFFF0001,
    "APNIC": 0xFFFF0002,
    "ARIN": 0xFFFF0003,
    "LACNIC": 0xFFFF0004,
    "RIPE": 0xFFFF0005,
}
REGISTRY_ASNS = frozenset({IANA_ASN, *RIR_ASNS.values()})


def is_asn(value: Any) -> bool:
    return type(value) is int and 0 < value <= ASN_MAX


def check_asn(value: Any, what: str = "asn") -> int:
    if not is_asn(value):
        raise InvalidPayload(f"{what}: {value!r} is not a valid ASN")
    return value


def parse_prefix(text: str) -> Prefix:
    """Parse ``A.B.C.D/L`` or an IPv6 prefix; host bits must be zero."""
    if not isinstance(text, str) or "/" not in text:
        raise InvalidPayload(f"not a prefix: {text!r}")
    try:
        net = ipaddress.ip_network(text, strict=True)
    except ValueError as exc:
        raise InvalidPayload(f"not a canonical prefix: {text!r}") from exc
    if str(net) != text:
        raise InvalidPayload(f"prefix not in canonical text form: {text!r}")
    return net


def prefix_key(prefix: Prefix) -> tuple[int, int, int]:
    return (prefix.version, int(prefix.network_address), prefix.prefixlen)


def _asn_list(values: Iterable[int], what: str) -> tuple[int, ...]:
    out = tuple(values)
    for v in out:
        check_asn(v, what)
    if len(set(out)) != len(out):
        raise InvalidPayload(f"{what}: duplicate ASNs")
    return out


def _is_txid(value: Any) -> bool:
    return isinstance(value, str) and len(value) == 64 and all(c in "0123456789abcdef" for c in value)


def _is_uint(value: Any, bits: int = 64) -> bool:
    return type(value) is int and 0 <= value < 2**bits


class TxType(str, Enum):
    GENESIS_ASSIGN = "genesis_assign"
    ASSIGN = "assign"
    UPDATE = "update"
    REVOKE = "revoke"
    ANNOUNCE = "announce"
    WITHDRAW = "withdraw"

    def __str__(self) -> str:
        return self.value


# --------------------------------------------------------------------------
# payloads


@dataclass(frozen=True)
class GenesisAssign:
    allocations: tuple[tuple[Prefix, int], ...]

    tx_type = TxType.GENESIS_ASSIGN

    def __post_init__(self):
        object.__setattr__(self, "allocations", tuple((p, a) for p, a in self.allocations))
        for prefix, asn in self.allocations:
            if not isinstance(prefix, (ipaddress.IPv4Network, ipaddress.IPv6Network)):
                raise InvalidPayload(f"not a prefix: {prefix!r}")
            check_asn(asn)

    @property
    def creator_field(self) -> int | None:
        return None

    def to_dict(self) -> dict:
        return {"allocations": [[str(p), a] for p, a in self.allocations]}

    @classmethod
    def from_dict(cls, d: dict) -> GenesisAssign:
        _keys(d, {"allocations"})
        allocs = []
        for item in _list(d["allocations"]):
            if not isinstance(item, list) or len(item) != 2:
                raise DecodeError("allocation entries are [prefix, asn] pairs")
            allocs.append((parse_prefix(item[0]), item[1]))
        return cls(tuple(allocs))


@dataclass(frozen=True)
class Assign:
    prefix: Prefix
    as_source: int
    as_dest: tuple[int, ...]
    source_lease: int
    lease_duration: int
    transfer_tag: bool
    last_assign: TxId

    tx_type = TxType.ASSIGN

    def __post_init__(self):
        check_asn(self.as_source, "as_source")
        object.__setattr__(self, "as_dest", _asn_list(self.as_dest, "as_dest"))
        if not self.as_dest:
            raise InvalidPayload("as_dest must be non-empty")
        if self.as_source in self.as_dest:
            raise InvalidPayload("as_source cannot be a destination")
        if not (_is_uint(self.lease_duration) and self.lease_duration > 0):
            raise InvalidPayload("lease_duration must be a positive integer")
        if not _is_uint(self.source_lease):
            raise InvalidPayload("source_lease must be a non-negative integer")
        if self.lease_duration > self.source_lease:
            raise InvalidPayload("lease_duration exceeds source_lease")
        if type(self.transfer_tag) is not bool:
            raise InvalidPayload("transfer_tag must be boolean")
        if not _is_txid(self.last_assign):
            raise InvalidPayload("last_assign must be a txid")

    @property
    def creator_field(self) -> int:
        return self.as_source

    def to_dict(self) -> dict:
        return {
            "prefix": str(self.prefix),
            "as_source": self.as_source,
            "as_dest": list(self.as_dest),
            "source_lease": self.source_lease,
            "lease_duration": self.lease_duration,
            "transfer_tag": self.transfer_tag,
            "last_assign": self.last_assign,
        }

    @classmethod
    def from_dict(cls, d: dict) -> Assign:
        _keys(d, {"prefix", "as_source", "as_dest", "source_lease", "lease_duration", "transfer_tag", "last_assign"})
        return cls(
            parse_prefix(d["prefix"]),
            d["as_source"],
            tuple(_list(d["as_dest"])),
            d["source_lease"],
            d["lease_duration"],
            d["transfer_tag"],
            d["last_assign"],
        )


@dataclass(frozen=True)
class Update:
    as_source: int
    assign_tran: TxId
    new_lease: int

    tx_type = TxType.UPDATE

    def __post_init__(self):
        check_asn(self.as_source, "as_source")
        if not _is_txid(self.assign_tran):
            raise InvalidPayload("assign_tran must be a txid")
        if not (_is_uint(self.new_lease) and self.new_lease > 0):
            raise InvalidPayload("new_lease must be a positive integer")

    @property
    def creator_field(self) -> int:
        return self.as_source

    def to_dict(self) -> dict:
        return {"as_source": self.as_source, "assign_tran": self.assign_tran, "new_lease": self.new_lease}

    @classmethod
    def from_dict(cls, d: dict) -> Update:
        _keys(d, {"as_source", "assign_tran", "new_lease"})
        return cls(d["as_source"], d["assign_tran"], d["new_lease"])


@dataclass(frozen=True)
class Revoke:
    as_source: int
    assign_tran: TxId

    tx_type = TxType.REVOKE

    def __post_init__(self):
        check_asn(self.as_source, "as_source")
        if not _is_txid(self.assign_tran):
            raise InvalidPayload("assign_tran must be a txid")

    @property
    def creator_field(self) -> int:
        return self.as_source

    def to_dict(self) -> dict:
        return {"as_source": self.as_source, "assign_tran": self.assign_tran}

    @classmethod
    def from_dict(cls, d: dict) -> Revoke:
        _keys(d, {"as_source", "assign_tran"})
        return cls(d["as_source"], d["assign_tran"])


@dataclass(frozen=True)
class Announce:
    prefix: Prefix
    as_source: int
    as_source_list: tuple[int, ...]
    as_dest_list: tuple[int, ...]

    tx_type = TxType.ANNOUNCE

    def __post_init__(self):
        check_asn(self.as_source, "as_source")
        object.__setattr__(self, "as_source_list", _asn_list(self.as_source_list, "as_source_list"))
        object.__setattr__(self, "as_dest_list", _asn_list(self.as_dest_list, "as_dest_list"))
        if not self.as_dest_list:
            raise InvalidPayload("as_dest_list must be non-empty")
        if self.as_source in self.as_source_list or self.as_source in self.as_dest_list:
            raise InvalidPayload("as_source cannot appear in its own neighbor lists")
        if set(self.as_source_list) & set(self.as_dest_list):
            raise InvalidPayload("as_source_list and as_dest_list must be disjoint")

    @property
    def creator_field(self) -> int:
        return self.as_source

    def to_dict(self) -> dict:
        return {
            "prefix": str(self.prefix),
            "as_source": self.as_source,
            "as_source_list": list(self.as_source_list),
            "as_dest_list": list(self.as_dest_list),
        }

    @classmethod
    def from_dict(cls, d: dict) -> Announce:
        _keys(d, {"prefix", "as_source", "as_source_list", "as_dest_list"})
        return cls(
            parse_prefix(d["prefix"]),
            d["as_source"],
            tuple(_list(d["as_source_list"])),
            tuple(_list(d["as_dest_list"])),
        )


@dataclass(frozen=True)
class Withdraw:
    prefix: Prefix
    as_source: int

    tx_type = TxType.WITHDRAW

    def __post_init__(self):
        check_asn(self.as_source, "as_source")

    @property
    def creator_field(self) -> int:
        return self.as_source

    def to_dict(self) -> dict:
        return {"prefix": str(self.prefix), "as_source": self.as_source}

    @classmethod
    def from_dict(cls, d: dict) -> Withdraw:
        _keys(d, {"prefix", "as_source"})
        return cls(parse_prefix(d["prefix"]), d["as_source"])


Payload = Union[GenesisAssign, Assign, Update, Revoke, Announce, Withdraw]

PAYLOAD_TYPES: dict[TxType, type] = {
    TxType.GENESIS_ASSIGN: GenesisAssign,
    TxType.ASSIGN: Assign,
    TxType.UPDATE: Update,
    TxType.REVOKE: Revoke,
    TxType.ANNOUNCE: Announce,
    TxType.WITHDRAW: Withdraw,
}


def _keys(d: Any, expected: set[str]) -> None:
    if not isinstance(d, dict):
        raise DecodeError(f"expected an object, got {type(d).__name__}")
    if set(d) != expected:
        raise DecodeError(f"expected keys {sorted(expected)}, got {sorted(d)}")


def _list(v: Any) -> list:
    if not isinstance(v, list):
        raise DecodeError(f"expected a list, got {type(v).__name__}")
    return v


# --------------------------------------------------------------------------
# outputs


def derive_output(payload: Payload, lookup_assign: Callable[[TxId], Assign | None] | None = None) -> list:
    """Compute a transaction's output record from its input.

    Update and Revoke outputs depend on the referenced Assign; ``lookup_assign``
    resolves it. Returns ``None`` when the reference is unknown.
    """
    if isinstance(payload, GenesisAssign):
        return [{"prefix": str(p), "asn": a} for p, a in payload.allocations]
    if isinstance(payload, Assign):
        return [
            {
                "prefix": str(payload.prefix),
                "as_dest": d,
                "lease_duration": payload.lease_duration,
                "transfer_tag": payload.transfer_tag,
            }
            for d in payload.as_dest
        ]
    if isinstance(payload, Announce):
        p = str(payload.prefix)
        heads = [[p, s] for s in payload.as_source_list] or [[p]]
        return [h + [payload.as_source, d] for h in heads for d in payload.as_dest_list]
    if isinstance(payload, Withdraw):
        return [payload.to_dict()]
    original = lookup_assign(payload.assign_tran) if lookup_assign else None
    if original is None:
        return None
    if isinstance(payload, Update):
        return [
            {
                "prefix": str(original.prefix),
                "as_dest": d,
                "new_lease": payload.new_lease,
                "transfer_tag": original.transfer_tag,
            }
            for d in original.as_dest
        ]
    if isinstance(payload, Revoke):
        return [
            {
                "prefix": str(original.prefix),
                "as_source": original.as_source,
                # assigning required transfer rights, so the restored owner keeps them
                "transfer_tag": True,
                "new_lease_duration": restored_lease(original),
            }
        ]
    raise TypeError(f"unknown payload {payload!r}")


def restored_lease(original: Assign) -> int:
    if original.source_lease == INFINITE_LEASE:
        return INFINITE_LEASE
    return original.source_lease - original.lease_duration


# --------------------------------------------------------------------------
# transactions


def compute_txid(tx_type: TxType, payload: Payload, timestamp: int, creator: int) -> TxId:
    return content_hash(signing_content(tx_type, payload, timestamp, creator))


def signing_content(tx_type: TxType, payload: Payload, timestamp: int, creator: int) -> bytes:
    if not isinstance(payload, PAYLOAD_TYPES[TxType(tx_type)]):
        raise InvalidPayload(f"payload {type(payload).__name__} does not match type {tx_type}")
    return canonical_encode(
        {"type": str(tx_type), "input": payload.to_dict(), "timestamp": timestamp, "creator": creator}
    )


@dataclass(frozen=True, eq=True)
class Transaction:
    txid: TxId
    tx_type: TxType
    input: Payload
    output: list | None
    timestamp: int
    creator: int
    signature: bytes = field(repr=False, default=b"")

    __hash__ = None  # output holds lists

    @classmethod
    def create(
        cls,
        payload: Payload,
        timestamp: int,
        keypair: KeyPair | None,
        creator: int | None = None,
        output: list | None = None,
        lookup_assign: Callable[[TxId], Assign | None] | None = None,
    ) -> Transaction:
        """Build and sign a transaction. ``creator`` defaults to the payload's as_source."""
        if creator is None:
            creator = payload.creator_field
        check_asn(creator, "creator")
        if not _is_uint(timestamp):
            raise InvalidPayload("timestamp must be a non-negative integer")
        content = signing_content(payload.tx_type, payload, timestamp, creator)
        if output is None:
            output = derive_output(payload, lookup_assign)
        sig = keypair.sign(content) if keypair is not None else b""
        return cls(content_hash(content), payload.tx_type, payload, output, timestamp, creator, sig)

    def signing_bytes(self) -> bytes:
        return signing_content(self.tx_type, self.input, self.timestamp, self.creator)

    def expected_txid(self) -> TxId:
        return content_hash(self.signing_bytes())

    def to_dict(self) -> dict:
        return {
            "txid": self.txid,
            "type": str(self.tx_type),
            "input": self.input.to_dict(),
            "output": self.output,
            "timestamp": self.timestamp,
            "creator": self.creator,
            "signature": self.signature.hex(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> Transaction:
        _keys(d, {"txid", "type", "input", "output", "timestamp", "creator", "signature"})
        try:
            tx_type = TxType(d["type"])
        except ValueError as exc:
            raise DecodeError(f"unknown transaction type {d['type']!r}") from exc
        if not _is_txid(d["txid"]):
            raise DecodeError("txid must be 64 lowercase hex chars")
        if not _is_uint(d["timestamp"]) or not is_asn(d["creator"]):
            raise DecodeError("bad timestamp or creator")
        if d["output"] is not None and not isinstance(d["output"], list):
            raise DecodeError("output must be a list")
        payload = PAYLOAD_TYPES[tx_type].from_dict(d["input"])
        return cls(d["txid"], tx_type, payload, d["output"], d["timestamp"], d["creator"], _hex(d["signature"]))


def _hex(value: Any) -> bytes:
    if not isinstance(value, str) or value != value.lower():
        raise DecodeError("byte strings are lowercase hex")
    try:
        return bytes.fromhex(value)
    except ValueError as exc:
        raise DecodeError(str(exc)) from exc


# --------------------------------------------------------------------------
# blocks


def hash_preimage_parts(index: int, txids: list[TxId], timestamp: int, previous_hash: str, miner: int) -> tuple[bytes, bytes]:
    """Split the block-hash pre-image around the nonce digits.

    The canonical encoding sorts keys as index, miner, nonce, previous_hash,
    timestamp, txids, so ``prefix + str(nonce) + suffix`` is exactly the
    canonical encoding of the block content with that nonce.
    """
    head = canonical_encode({"index": index, "miner": miner})
    tail = canonical_encode({"previous_hash": previous_hash, "timestamp": timestamp, "txids": list(txids)})
    return head[:-1] + b',"nonce":', b"," + tail[1:]


def compute_block_hash(index: int, txids: list[TxId], timestamp: int, previous_hash: str, nonce: int, miner: int) -> str:
    prefix, suffix = hash_preimage_parts(index, txids, timestamp, previous_hash, miner)
    return content_hash(prefix + str(nonce).encode() + suffix)


def block_signing_bytes(block_hash: str, mined_timestamp: int) -> bytes:
    return canonical_encode({"hash": block_hash, "mined_timestamp": mined_timestamp})


@dataclass(frozen=True)
class Block:
    index: int
    transactions: tuple[Transaction, ...]
    timestamp: int
    previous_hash: str
    miner: int
    nonce: int = 0
    hash: str = ""
    mined_timestamp: int = 0
    signature: bytes = field(repr=False, default=b"")

    __hash__ = None

    @property
    def txids(self) -> list[TxId]:
        return [t.txid for t in self.transactions]

    @property
    def is_genesis(self) -> bool:
        return self.index == 0 and self.previous_hash == ZERO_HASH

    def compute_hash(self, nonce: int | None = None) -> str:
        return compute_block_hash(
            self.index, self.txids, self.timestamp, self.previous_hash, self.nonce if nonce is None else nonce, self.miner
        )

    def preimage_parts(self) -> tuple[bytes, bytes]:
        return hash_preimage_parts(self.index, self.txids, self.timestamp, self.previous_hash, self.miner)

    def signing_bytes(self) -> bytes:
        return block_signing_bytes(self.hash, self.mined_timestamp)

    def header(self) -> dict:
        return {"index": self.index, "hash": self.hash, "miner": self.miner}

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "transactions": [t.to_dict() for t in self.transactions],
            "timestamp": self.timestamp,
            "mined_timestamp": self.mined_timestamp,
            "previous_hash": self.previous_hash,
            "nonce": self.nonce,
            "hash": self.hash,
            "miner": self.miner,
            "signature": self.signature.hex(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> Block:
        _keys(d, {"index", "transactions", "timestamp", "mined_timestamp", "previous_hash", "nonce", "hash", "miner", "signature"})
        for name in ("index", "timestamp", "mined_timestamp", "nonce"):
            if not _is_uint(d[name]):
                raise DecodeError(f"{name} must be a 64-bit unsigned integer")
        if not _is_txid(d["previous_hash"]) or not _is_txid(d["hash"]):
            raise DecodeError("hashes must be 64 lowercase hex chars")
        if not is_asn(d["miner"]):
            raise DecodeError("miner must be an ASN")
        txs = tuple(Transaction.from_dict(t) for t in _list(d["transactions"]))
        return cls(
            d["index"], txs, d["timestamp"], d["previous_hash"], d["miner"],
            d["nonce"], d["hash"], d["mined_timestamp"], _hex(d["signature"]),
        )


def build_genesis_block(allocations: Iterable[tuple[Prefix, int]], authority: int = IANA_ASN, timestamp: int = 0) -> Block:
    allocations = list(allocations)
    seen = set()
    for pair in allocations:
        if pair in seen:
            raise DuplicateAllocation(f"duplicate allocation {pair[0]} -> AS{pair[1]}")
        seen.add(pair)
    tx = Transaction.create(GenesisAssign(tuple(allocations)), timestamp, None, creator=authority)
    block = Block(0, (tx,), timestamp, ZERO_HASH, authority, 0, "", timestamp, b"")
    return replace(block, hash=block.compute_hash())


class Chain:
    """Ordered list of blocks starting at genesis. Cheap to copy; blocks are shared."""

    def __init__(self, blocks: Iterable[Block]):
        self.blocks: list[Block] = list(blocks)
        if not self.blocks:
            raise ValueError("a chain needs at least the genesis block")

    def __len__(self) -> int:
        return len(self.blocks)

    def __iter__(self):
        return iter(self.blocks)

    def __getitem__(self, i):
        return self.blocks[i]

    @property
    def genesis(self) -> Block:
        return self.blocks[0]

    @property
    def head(self) -> Block:
        return self.blocks[-1]

    def txids(self) -> set[TxId]:
        return {t.txid for b in self.blocks for t in b.transactions}

    def copy(self) -> Chain:
        return Chain(self.blocks)

    def appended(self, block: Block) -> Chain:
        return Chain(self.blocks + [block])

    def to_dict(self) -> dict:
        return {"blocks": [b.to_dict() for b in self.blocks]}

    @classmethod
    def from_dict(cls, d: dict) -> Chain:
        _keys(d, {"blocks"})
        blocks = _list(d["blocks"])
        if not blocks:
            raise DecodeError("empty chain")
        return cls(Block.from_dict(b) for b in blocks)


def decode_transaction(data: bytes) -> Transaction:
    return Transaction.from_dict(canonical_decode(data))


def decode_block(data: bytes) -> Block:
    return Block.from_dict(canonical_decode(data))
