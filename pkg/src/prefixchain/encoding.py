"""Canonical JSON encoding and content hashing.

Every hash and signature in the ledger is computed over the bytes produced
here: keys sorted, no insignificant whitespace, ASCII only, integers as
decimal literals. Floats are refused so the byte form cannot drift.
"""

from __future__ import annotations

import hashlib
import json
from typing import Any

from .errors import DecodeError

ZERO_HASH = "0" * 64


def _check(value: Any) -> None:
    if isinstance(value, float):
        raise TypeError("floats are not canonically encodable")
    if isinstance(value, dict):
        for k, v in value.items():
            if not isinstance(k, str):
                raise TypeError(f"non-string key {k!r}")
            _check(v)
    elif isinstance(value, (list, tuple)):
        for v in value:
            _check(v)


def canonical_encode(value: Any) -> bytes:
    """Encode a ledger object (anything with ``to_dict``) or plain JSON data."""
    if hasattr(value, "to_dict"):
        value = value.to_dict()
    _check(value)
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=True).encode("ascii")


def canonical_decode(data: bytes | str) -> Any:
    try:
        return json.loads(data)
    except (ValueError, UnicodeDecodeError) as exc:
        raise DecodeError(str(exc)) from exc


def content_hash(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def hash_object(value: Any) -> str:
    return content_hash(canonical_encode(value))
