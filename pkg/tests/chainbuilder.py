"""Builds honest multi-block chains for consensus and tamper tests."""

from prefixchain.builders import build_announce, build_assign, build_revoke, build_update, build_withdraw
from prefixchain.ledger import Chain, parse_prefix
from prefixchain.mining import Mempool, assemble, mine

from conftest import World

PREFIXES = [parse_prefix(f"10.{i}.0.0/16") for i in range(1, 11)]
MINER = 1


def honest_chain(n_blocks=10, difficulty=1, seed="chain"):
    """Genesis plus ``n_blocks`` mined blocks mixing every transaction type."""
    w = World([(p, 100 + i) for i, p in enumerate(PREFIXES)], asns=range(1, 200), seed=seed)
    chain = Chain([w.genesis])
    state = w.state
    t = 1000
    for i in range(n_blocks):
        p, owner = PREFIXES[i % len(PREFIXES)], 100 + i % len(PREFIXES)
        mp = Mempool(state, chain.txids())
        ip = state.ip
        txs = [
            build_announce(w.keys[owner], owner, p, [], [2, 3], t),
        ]
        for tx in txs:
            assert mp.submit(tx, w.registry, t), tx
        mp.submit(build_announce(w.keys[2], 2, p, [owner], [4], t), w.registry, t)
        mp.submit(build_withdraw(w.keys[2], 2, p, t + 1), w.registry, t + 1)
        if i % 3 == 2:
            a = build_assign(mp.state.ip, w.keys[owner], owner, p, [50 + i], 5, True, t + 1)
            assert mp.submit(a, w.registry, t + 1)
            assert mp.submit(build_update(mp.state.ip, w.keys[owner], owner, a.txid, 4, t + 2), w.registry, t + 2)
            assert mp.submit(build_revoke(mp.state.ip, w.keys[owner], owner, a.txid, t + 9), w.registry, t + 9)
        cand = assemble(mp, chain, state, w.registry, MINER, t + 10)
        chain = chain.appended(mine(cand.block, difficulty, w.keys[MINER], clock=lambda: t + 11))
        state = cand.state
        t += 100
    return w, chain, state
