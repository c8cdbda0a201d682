"""Exceptions, rejection reasons and the verdict type returned by validators."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any
from enum import Enum


class PrefixChainError(Exception):
    pass


class InvalidPayload(PrefixChainError, ValueError):
    pass


class MalformedKey(PrefixChainError, ValueError):
    pass


class DecodeError(PrefixChainError, ValueError):
    pass


class DuplicateAllocation(PrefixChainError, ValueError):
    pass


class NonEmptyState(PrefixChainError):
    pass


class PreconditionViolated(PrefixChainError):
    pass


class NoWork(PrefixChainError):
    """Raised when a block is requested from an empty mempool."""


class Aborted(PrefixChainError):
    """Mining was interrupted by the abort signal."""


class AllBootstrapsUnreachable(PrefixChainError):
    pass


class KeyConflict(PrefixChainError):
    """An ASN tried to re-register with a different public key."""


class Reason(str, Enum):
    # ip allocation
    NOT_OWNER = "NotOwner"
    LAST_ASSIGN_MISMATCH = "LastAssignMismatch"
    LEASE_EXCEEDS_SOURCE = "LeaseExceedsSource"
    SOURCE_LEASE_MISMATCH = "SourceLeaseMismatch"
    TRANSFER_NOT_ALLOWED = "TransferNotAllowed"
    DEST_ALREADY_OWNER = "DestAlreadyOwner"
    UNKNOWN_ASSIGN = "UnknownAssign"
    NOT_ASSIGNER = "NotAssigner"
    ASSIGN_SUPERSEDED = "AssignSuperseded"
    LEASE_EXPIRED = "LeaseExpired"
    LEASE_NOT_EXPIRED = "LeaseNotExpired"
    NEW_LEASE_EXCEEDS_SOURCE = "NewLeaseExceedsSource"
    SOURCE_ALREADY_OWNER = "SourceAlreadyOwner"
    # bgp path
    UNKNOWN_PREFIX = "UnknownPrefix"
    INVALID_ORIGIN = "InvalidOrigin"
    NO_PATH = "NoPath"
    LOOP_DETECTED = "LoopDetected"
    # shared
    UNKNOWN_PARTICIPANT = "UnknownParticipant"
    BAD_SIGNATURE = "BadSignature"
    UNKNOWN_CREATOR = "UnknownCreator"
    CREATOR_MISMATCH = "CreatorMismatch"
    TXID_MISMATCH = "TxidMismatch"
    OUTPUT_MISMATCH = "OutputMismatch"
    INVALID_PAYLOAD = "InvalidPayload"
    DUPLICATE = "Duplicate"
    FUTURE_TIMESTAMP = "FutureTimestamp"
    GENESIS_NOT_ALLOWED = "GenesisNotAllowed"
    # chain level
    MALFORMED = "Malformed"
    GENESIS_MISMATCH = "GenesisMismatch"
    LINKAGE = "Linkage"
    HASH_MISMATCH = "HashMismatch"
    POW = "PoW"
    MINER_SIGNATURE = "MinerSignature"
    EMPTY_BLOCK = "EmptyBlock"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class Verdict:
    ok: bool
    reason: Reason | None = None
    detail: str = ""

    def __bool__(self) -> bool:
        return self.ok

    @classmethod
    def valid(cls) -> Verdict:
        return _VALID

    @classmethod
    def invalid(cls, reason: Reason, detail: str = "") -> Verdict:
        return cls(False, reason, detail)


_VALID = Verdict(True)


@dataclass(frozen=True)
class ChainVerdict:
    """Outcome of chain validation; ``block_index``/``tx_index`` locate the first failure."""

    ok: bool
    reason: Reason | None = None
    block_index: int | None = None
    tx_index: int | None = None
    detail: str = ""
    state: Any = field(default=None, compare=False, repr=False)

    def __bool__(self) -> bool:
        return self.ok
