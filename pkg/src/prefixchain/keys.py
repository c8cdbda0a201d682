"""Ed25519 key pairs, signing and verification."""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey, Ed25519PublicKey
from cryptography.hazmat.primitives.serialization import Encoding, NoEncryption, PrivateFormat, PublicFormat

from .errors import MalformedKey


class KeyPair:
    __slots__ = ("_private", "public")

    def __init__(self, private: Ed25519PrivateKey):
        self._private = private
        self.public = private.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)

    @classmethod
    def generate(cls) -> KeyPair:
        return cls(Ed25519PrivateKey.generate())

    @classmethod
    def from_seed(cls, seed: bytes) -> KeyPair:
        """Deterministic key from arbitrary seed material (simulation keys only)."""
        return cls(Ed25519PrivateKey.from_private_bytes(hashlib.sha256(seed).digest()))

    @classmethod
    def from_private_bytes(cls, raw: bytes) -> KeyPair:
        try:
            return cls(Ed25519PrivateKey.from_private_bytes(raw))
        except ValueError as exc:
            raise MalformedKey(str(exc)) from exc

    @property
    def public_hex(self) -> str:
        return self.public.hex()

    def private_bytes(self) -> bytes:
        return self._private.private_bytes(Encoding.Raw, PrivateFormat.Raw, NoEncryption())

    def sign(self, data: bytes) -> bytes:
        return self._private.sign(data)

    def save(self, path: str | os.PathLike) -> None:
        path = Path(path)
        doc = {"private_key": self.private_bytes().hex(), "public_key": self.public_hex}
        fd = os.open(path, os.O_WRONLY | os.O_CREAT | os.O_TRUNC, 0o600)
        with os.fdopen(fd, "w") as f:
            json.dump(doc, f)
            f.write("\n")

    @classmethod
    def load(cls, path: str | os.PathLike) -> KeyPair:
        try:
            doc = json.loads(Path(path).read_text())
            kp = cls.from_private_bytes(bytes.fromhex(doc["private_key"]))
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise MalformedKey(f"cannot load key from {path}: {exc}") from exc
        if doc.get("public_key", kp.public_hex) != kp.public_hex:
            raise MalformedKey(f"public key in {path} does not match private key")
        return kp


def sign(keypair: KeyPair, data: bytes) -> bytes:
    return keypair.sign(data)


def verify(pubkey: bytes, data: bytes, signature: bytes) -> bool:
    if len(pubkey) != 32:
        raise MalformedKey("ed25519 public keys are 32 bytes")
    try:
        Ed25519PublicKey.from_public_bytes(pubkey).verify(signature, data)
    except InvalidSignature:
        return False
    return True


class Keyring(dict):
    """ASN -> KeyPair map; with a seed, missing keys are derived deterministically."""

    def __init__(self, seed: str | None = None, keys: dict | None = None):
        super().__init__(keys or {})
        self.seed = seed

    def __missing__(self, asn: int) -> KeyPair:
        if self.seed is None:
            raise KeyError(asn)
        kp = KeyPair.from_seed(f"prefixchain-sim:{self.seed}:{asn}".encode())
        self[asn] = kp
        return kp

    def public_registry(self) -> dict[int, bytes]:
        return {asn: kp.public for asn, kp in self.items()}
