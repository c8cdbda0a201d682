"""Deterministic in-process network of nodes for experiments and tests.

Nodes are ordinary :class:`~prefixchain.node.Node` instances wired to an
in-memory transport. Requests (peer lists, chain fetches, pings) are served
synchronously; fire-and-forget sends (transaction broadcast, block notify)
go into per-link FIFO queues and are delivered by :meth:`SimNetwork.settle`,
which picks the next non-empty link with a seeded RNG. Time is virtual.

Scenario grammar, one event per line (``#`` starts a comment)::

    tick N                  advance the clock N seconds (keep-alives every 10 s)
    tx NODE FILE            submit the JSON transaction in FILE at NODE
    inject FILE             hand FILE's transaction to every node without relay
    mine NODE[,NODE...]     each listed node mines one block before any delivery
    miner NODE on|off       toggle automatic mining during settle
    partition A[,A] B[,B]   sever every link between the two groups
    heal A[,A] B[,B]        restore them

NODE is the node's ASN.
"""

from __future__ import annotations

import json
import logging
import random
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

from .consensus import validate_chain
from .encoding import canonical_encode
from .keys import Keyring
from .ledger import Block, Prefix, Transaction, build_genesis_block
from .node import Node
from .overlay import DEFAULT_KEEPALIVE_INTERVAL, Unreachable, participant_records

log = logging.getLogger(__name__)

SIM_PORT = 7000


def _wire(value: Any) -> Any:
    """Round-trip through the canonical encoding, as a real socket would."""
    return None if value is None else json.loads(canonical_encode(value))


class VirtualClock:
    def __init__(self, start: int = 1000):
        self.t = start

    def __call__(self) -> int:
        return self.t


class SimTransport:
    def __init__(self, net: SimNetwork, src: int):
        self.net = net
        self.src = src

    def request(self, address: str, port: int, method: str, path: str, body: Any = None) -> tuple[int, Any]:
        dst = self.net.by_address.get((address, port))
        if dst is None or not self.net.linked(self.src, dst):
            raise Unreachable(f"{address}:{port} unreachable from AS{self.src}")
        status, payload = self.net.nodes[dst].handle(method, path, _wire(body))
        return status, _wire(payload)

    def send(self, address: str, port: int, path: str, body: Any) -> None:
        dst = self.net.by_address.get((address, port))
        if dst is None or not self.net.linked(self.src, dst):
            self.net.dropped += 1
            return
        self.net.queues.setdefault((self.src, dst), deque()).append((path, _wire(body)))


@dataclass
class Event:
    op: str
    args: tuple
    line: str = ""


@dataclass
class Transcript:
    steps: list[dict] = field(default_factory=list)
    final: dict[int, dict] = field(default_factory=dict)
    violations: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"steps": self.steps, "final": {str(k): v for k, v in self.final.items()}, "violations": self.violations}


class SimNetwork:
    def __init__(self, seed: int, clock: VirtualClock, keyring: Keyring, genesis: Block, difficulty: int):
        self.seed = seed
        self.rng = random.Random(seed)
        self.clock = clock
        self.keyring = keyring
        self.genesis = genesis
        self.difficulty = difficulty
        self.nodes: dict[int, Node] = {}
        self.by_address: dict[tuple[str, int], int] = {}
        self.queues: dict[tuple[int, int], deque] = {}
        self.severed: set[frozenset[int]] = set()
        self.miners: set[int] = set()
        self.delivered = 0
        self.dropped = 0
        self.last_keepalive = clock()
        self._validated: dict[int, str] = {}

    # -- construction -----------------------------------------------------

    @classmethod
    def build(
        cls,
        n: int,
        genesis_allocations: Iterable[tuple[Prefix, int]],
        difficulty: int = 1,
        seed: int = 0,
        participants: Iterable[int] = (),
        asns: Sequence[int] | None = None,
        start_time: int = 1000,
        max_tx: int = 100,
    ) -> SimNetwork:
        """``n`` nodes peered through node 0, sharing one genesis block.

        ``participants`` are ASes with keys but no node (their identity
        records are port 0); every node knows their keys from the start.
        """
        asns = list(asns) if asns is not None else list(range(1, n + 1))
        if len(asns) != n or len(set(asns)) != n:
            raise ValueError("need n distinct node ASNs")
        keyring = Keyring(seed)
        clock = VirtualClock(start_time)
        genesis = build_genesis_block(genesis_allocations)
        net = cls(seed, clock, keyring, genesis, difficulty)
        roster = {r.asn: r.pubkey for r in participant_records(keyring, participants)}
        for i, asn in enumerate(asns):
            address = f"10.255.{i // 250}.{i % 250 + 1}"
            node = Node(
                asn,
                keyring[asn],
                genesis,
                address=address,
                port=SIM_PORT,
                difficulty=difficulty,
                transport=SimTransport(net, asn),
                clock=clock,
                max_tx=max_tx,
                roster=roster,
            )
            net.nodes[asn] = node
            net.by_address[(address, SIM_PORT)] = asn
        first = net.nodes[asns[0]]
        for asn in asns[1:]:
            net.nodes[asn].join([(first.identity.address, first.identity.port)])
        for asn in asns:
            net.nodes[asn].gossip_round()
        net.settle()
        return net

    # -- links ------------------------------------------------------------

    def linked(self, a: int, b: int) -> bool:
        return frozenset((a, b)) not in self.severed

    def partition(self, group_a: Iterable[int], group_b: Iterable[int]) -> None:
        for a in group_a:
            for b in group_b:
                self.severed.add(frozenset((a, b)))

    def heal(self, group_a: Iterable[int], group_b: Iterable[int]) -> None:
        for a in group_a:
            for b in group_b:
                self.severed.discard(frozenset((a, b)))

    # -- driving ----------------------------------------------------------

    def pending_messages(self) -> int:
        return sum(len(q) for q in self.queues.values())

    def deliver_one(self) -> bool:
        live = sorted(k for k, q in self.queues.items() if q)
        if not live:
            return False
        src, dst = self.rng.choice(live)
        path, body = self.queues[(src, dst)].popleft()
        if not self.linked(src, dst):
            self.dropped += 1
            return True
        self.nodes[dst].handle("POST", path, body)
        self.delivered += 1
        return True

    def settle(self, max_rounds: int = 100_000) -> None:
        """Deliver messages and run enabled miners until nothing is left to do."""
        for _ in range(max_rounds):
            if self.deliver_one():
                continue
            mined = False
            for asn in sorted(self.miners):
                if self.nodes[asn].mine_block() is not None:
                    mined = True
                    break
            if not mined:
                return
        raise RuntimeError("simulation did not quiesce")

    def tick(self, seconds: int) -> None:
        end = self.clock.t + seconds
        while self.last_keepalive + DEFAULT_KEEPALIVE_INTERVAL <= end:
            self.last_keepalive += DEFAULT_KEEPALIVE_INTERVAL
            self.clock.t = self.last_keepalive
            for asn in sorted(self.nodes):
                self.nodes[asn].keepalive_sweep()
            self.settle()
        self.clock.t = end

    def submit(self, asn: int, tx: Transaction | dict, relay: bool = True) -> tuple[int, Any]:
        body = tx.to_dict() if isinstance(tx, Transaction) else tx
        status, payload = self.nodes[asn].handle("POST", "/transactions" + ("" if relay else "?relay=0"), _wire(body))
        return status, payload

    def inject(self, tx: Transaction | dict) -> dict[int, tuple[int, Any]]:
        return {asn: self.submit(asn, tx, relay=False) for asn in sorted(self.nodes)}

    def mine(self, asns: Iterable[int]) -> list[Block | None]:
        return [self.nodes[a].mine_block() for a in asns]

    # -- checks -----------------------------------------------------------

    def heads(self) -> dict[int, tuple[int, str]]:
        return {a: (len(n.chain), n.chain.head.hash) for a, n in sorted(self.nodes.items())}

    def check_safety(self) -> list[str]:
        """Fully validate any chain a node adopted since the last check."""
        bad = []
        for asn, node in sorted(self.nodes.items()):
            head = node.chain.head.hash
            if self._validated.get(asn) == head:
                continue
            v = validate_chain(node.chain, self.genesis.hash, self.difficulty, node.registry)
            if not v:
                bad.append(f"AS{asn} holds an invalid chain: {v.reason} at block {v.block_index}")
            self._validated[asn] = head
        return bad

    def snapshot(self) -> dict[int, dict]:
        out = {}
        for asn, node in sorted(self.nodes.items()):
            out[asn] = {
                "length": len(node.chain),
                "head": node.chain.head.hash,
                "ip": node.state.ip.dump(),
                "bgp": node.state.bgp.dump(),
                "invalid": [e.to_dict() for e in node.invalid_log],
                "chain_log": list(node.chain_log),
                "peers": sorted(node.peers.peers),
            }
        return out


def assert_converged(net: SimNetwork) -> bool:
    """True iff every node holds the same head and every chain validates."""
    if len({n.chain.head.hash for n in net.nodes.values()}) != 1:
        return False
    for node in net.nodes.values():
        if not validate_chain(node.chain, net.genesis.hash, net.difficulty, node.registry):
            return False
    return True


def _asns(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x]


def parse_scenario(text: str) -> list[Event]:
    events = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        op, *args = line.split()
        try:
            if op == "tick" and len(args) == 1:
                ev = Event(op, (int(args[0]),))
            elif op == "tx" and len(args) == 2:
                ev = Event(op, (int(args[0]), args[1]))
            elif op == "inject" and len(args) == 1:
                ev = Event(op, (args[0],))
            elif op == "mine" and len(args) == 1:
                ev = Event(op, (_asns(args[0]),))
            elif op == "miner" and len(args) == 2 and args[1] in ("on", "off"):
                ev = Event(op, (int(args[0]), args[1] == "on"))
            elif op in ("partition", "heal") and len(args) == 2:
                ev = Event(op, (_asns(args[0]), _asns(args[1])))
            else:
                raise ValueError("unknown event or wrong arity")
        except ValueError as exc:
            raise ValueError(f"scenario line {lineno}: {raw.strip()!r}: {exc}") from None
        ev.line = line
        events.append(ev)
    return events


def _load_tx(ref: str | dict | Transaction, base: Path) -> dict:
    if isinstance(ref, Transaction):
        return ref.to_dict()
    if isinstance(ref, dict):
        return ref
    return json.loads((base / ref).read_text())


def run(net: SimNetwork, scenario: str | Iterable[Event], base_dir: str | Path = ".") -> Transcript:
    """Apply each event in order, settle after it and record heads.

    Transaction arguments may be file names (resolved against ``base_dir``)
    or, when events are built in code, transaction objects or dicts.
    """
    events = parse_scenario(scenario) if isinstance(scenario, str) else list(scenario)
    base = Path(base_dir)
    out = Transcript()
    for step, ev in enumerate(events):
        result: Any = None
        if ev.op == "tick":
            net.tick(ev.args[0])
        elif ev.op == "tx":
            result = net.submit(ev.args[0], _load_tx(ev.args[1], base))
        elif ev.op == "inject":
            result = net.inject(_load_tx(ev.args[0], base))
        elif ev.op == "mine":
            result = [b.hash if b else None for b in net.mine(ev.args[0])]
        elif ev.op == "miner":
            (net.miners.add if ev.args[1] else net.miners.discard)(ev.args[0])
        elif ev.op == "partition":
            net.partition(*ev.args)
        elif ev.op == "heal":
            net.heal(*ev.args)
        else:
            raise ValueError(f"unknown event {ev.op!r}")
        net.settle()
        out.violations.extend(f"step {step}: {v}" for v in net.check_safety())
        out.steps.append({
            "step": step,
            "event": ev.line or ev.op,
            "time": net.clock.t,
            "result": _wire(result) if not isinstance(result, dict) else {str(k): v for k, v in result.items()},
            "heads": {str(a): list(h) for a, h in net.heads().items()},
        })
    out.final = net.snapshot()
    return out


def event(op: str, *args: Any) -> Event:
    """Build an event in code, e.g. ``event("tx", 1, tx)``."""
    return Event(op, args, op)
