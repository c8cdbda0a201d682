"""Passive ledger of IP prefix allocations and BGP paths.

The chain records who owns which prefix (Assign, Update, Revoke on top of a
genesis allocation) and which AS-level routes exist for it (Announce,
Withdraw). Nodes validate every transaction against state replayed from the
chain, mine blocks with a SHA-256 proof of work and follow the longest valid
chain.
"""

__version__ = "0.1.0"

from .errors import Reason, Verdict  # noqa: E402
from .keys import KeyPair, Keyring  # noqa: E402
from .ledger import Block, Chain, Transaction, TxType, build_genesis_block, parse_prefix  # noqa: E402
from .state import LedgerState  # noqa: E402

__all__ = [
    "Block",
    "Chain",
    "KeyPair",
    "Keyring",
    "LedgerState",
    "Reason",
    "Transaction",
    "TxType",
    "Verdict",
    "build_genesis_block",
    "parse_prefix",
]
