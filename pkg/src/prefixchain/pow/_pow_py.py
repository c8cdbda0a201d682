"""Pure-Python nonce search with the same contract as the compiled kernel."""

import hashlib


def meets_target(digest: bytes, zeros: int) -> bool:
    full, half = divmod(zeros, 2)
    if digest[:full] != bytes(full):
        return False
    return not half or digest[full] < 16


def search(prefix: bytes, suffix: bytes, difficulty: int, start: int, count: int) -> int:
    """Return the first nonce in ``[start, start + count)`` meeting the target, or -1."""
    if not 0 <= difficulty <= 64:
        raise ValueError("difficulty out of range")
    base = hashlib.sha256(prefix)
    full, half = divmod(difficulty, 2)
    zero = bytes(full)
    for nonce in range(start, start + count):
        h = base.copy()
        h.update(str(nonce).encode())
        h.update(suffix)
        d = h.digest()
        if d[:full] == zero and (not half or d[full] < 16):
            return nonce
    return -1
