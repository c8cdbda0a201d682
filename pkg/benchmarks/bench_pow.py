"""Compare the compiled and pure-Python nonce search.

    python benchmarks/bench_pow.py [--difficulty 4] [--trials 20]

Both backends search the same block pre-images, so they must return the
same nonces; the script checks that and reports hash rate and speedup.
"""

from __future__ import annotations

import argparse
import statistics
import time

from prefixchain import pow as powmod
from prefixchain.ledger import hash_preimage_parts


def _preimage(i: int) -> tuple[bytes, bytes]:
    txid = f"{i:064x}"
    return hash_preimage_parts(1, [txid], 1_700_000_000 + i, "0" * 64, 64500)


def run(search, difficulty: int, trials: int) -> tuple[list[int], list[float]]:
    nonces, times = [], []
    for i in range(trials):
        prefix, suffix = _preimage(i)
        t0 = time.perf_counter()
        start = 0
        while True:
            n = search(prefix, suffix, difficulty, start, 1 << 16)
            if n >= 0:
                break
            start += 1 << 16
        times.append(time.perf_counter() - t0)
        nonces.append(n)
    return nonces, times


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--difficulty", type=int, default=4)
    ap.add_argument("--trials", type=int, default=20)
    args = ap.parse_args()

    backends = {"python": powmod.python_search}
    if powmod.compiled_search is not None:
        backends["compiled"] = powmod.compiled_search
    else:
        print("compiled backend unavailable; timing the Python search only")

    results = {}
    for name, fn in backends.items():
        nonces, times = run(fn, args.difficulty, args.trials)
        hashes = sum(n + 1 for n in nonces)
        results[name] = (nonces, sum(times))
        print(
            f"{name:<9} difficulty {args.difficulty}: median {statistics.median(times) * 1e3:8.2f} ms, "
            f"{hashes / sum(times) / 1e6:6.2f} Mhash/s"
        )
    if len(results) == 2:
        assert results["python"][0] == results["compiled"][0], "backends disagree on nonces"
        print(f"speedup   {results['python'][1] / results['compiled'][1]:.1f}x (identical nonces)")


if __name__ == "__main__":
    main()
