from __future__ import annotations

import pytest

from prefixchain.keys import Keyring
from prefixchain.ledger import build_genesis_block, parse_prefix
from prefixchain.state import LedgerState

P = parse_prefix("10.0.0.0/8")
Q = parse_prefix("192.168.0.0/16")
V6 = parse_prefix("2001:db8::/32")


class World:
    """One genesis, a deterministic keyring and a registry covering ``asns``."""

    def __init__(self, allocations, asns=range(1, 21), seed="tests"):
        self.keys = Keyring(seed)
        self.genesis = build_genesis_block(allocations)
        self.registry = {a: self.keys[a].public for a in asns}
        self.state = LedgerState.from_genesis(self.genesis.transactions[0])

    def check_apply(self, tx, now=None):
        v = self.state.check(tx, self.registry, now)
        assert v, f"{tx.tx_type} rejected: {v.reason} {v.detail}"
        self.state.apply(tx)
        return tx


@pytest.fixture
def world():
    return World([(P, 1), (Q, 2), (V6, 3)])


def pytest_terminal_summary(terminalreporter):
    rows = []
    for outcome in ("passed", "failed"):
        for rep in terminalreporter.stats.get(outcome, []):
            if rep.when != "call" or "test_acceptance" not in rep.nodeid:
                continue
            props = dict(getattr(rep, "user_properties", ()))
            if "criterion" in props:
                rows.append((props["criterion"], props["summary"]))
            else:
                rows.append((99, f"FAIL {rep.nodeid} (failed before reporting)"))
    if rows:
        terminalreporter.section("acceptance criteria")
        for n, summary in sorted(rows):
            terminalreporter.write_line(f"criterion {n}: {summary}" if n != 99 else summary)
