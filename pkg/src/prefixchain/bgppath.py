"""Per-prefix AS-level graphs and the BGP Path transaction rules.

Edges point in the traffic direction: an edge ``a -> b`` means AS a sends
traffic for the prefix via AS b. The prefix itself is the sink node, stored
as :data:`SINK` (ASN 0 is never a valid participant).
"""

from __future__ import annotations

import logging
from typing import Container, Iterable

from .errors import Reason, Verdict
from .ledger import Announce, Prefix, Transaction, Withdraw, prefix_key

log = logging.getLogger(__name__)

SINK = 0


class PrefixGraph:
    def __init__(self, prefix: Prefix):
        self.prefix = prefix
        self.succ: dict[int, set[int]] = {SINK: set()}
        self.pred: dict[int, set[int]] = {SINK: set()}

    def copy(self) -> PrefixGraph:
        g = PrefixGraph(self.prefix)
        g.succ = {n: set(s) for n, s in self.succ.items()}
        g.pred = {n: set(s) for n, s in self.pred.items()}
        return g

    @property
    def nodes(self) -> set[int]:
        return set(self.succ)

    @property
    def as_nodes(self) -> set[int]:
        return set(self.succ) - {SINK}

    def edges(self) -> set[tuple[int, int]]:
        return {(a, b) for a, bs in self.succ.items() for b in bs}

    def origins(self) -> set[int]:
        return set(self.pred[SINK])

    def add_node(self, n: int) -> None:
        self.succ.setdefault(n, set())
        self.pred.setdefault(n, set())

    def add_edge(self, a: int, b: int) -> None:
        self.add_node(a)
        self.add_node(b)
        self.succ[a].add(b)
        self.pred[b].add(a)

    def remove_node(self, n: int) -> None:
        for b in self.succ.pop(n, ()):
            self.pred[b].discard(n)
        for a in self.pred.pop(n, ()):
            self.succ[a].discard(n)

    def reaching_sink(self) -> set[int]:
        """All nodes with a directed path to the sink (the sink included)."""
        seen = {SINK}
        stack = [SINK]
        while stack:
            for a in self.pred[stack.pop()]:
                if a not in seen:
                    seen.add(a)
                    stack.append(a)
        return seen

    def equals(self, other: PrefixGraph) -> bool:
        return self.nodes == other.nodes and self.edges() == other.edges()

    def to_dict(self) -> dict:
        return {"prefix": str(self.prefix), "edges": sorted([a, b] for a, b in self.edges()), "nodes": sorted(self.nodes)}

    def to_dot(self) -> str:
        sink = f'"P:{self.prefix}"'

        def label(n: int) -> str:
            return sink if n == SINK else f'"AS{n}"'

        lines = [f'digraph "{self.prefix}" {{', f"  {sink};"]
        lines += [f"  {label(n)};" for n in sorted(self.as_nodes)]
        # sink sorts first (0), so edges into it lead each group
        lines += [f"  {label(a)} -> {label(b)};" for a, b in sorted(self.edges())]
        lines.append("}")
        return "\n".join(lines) + "\n"


def has_path(graph: PrefixGraph | None, asn: int) -> bool:
    if graph is None or asn not in graph.succ:
        return False
    seen = {asn}
    stack = [asn]
    while stack:
        n = stack.pop()
        if n == SINK:
            return True
        for m in graph.succ[n]:
            if m not in seen:
                seen.add(m)
                stack.append(m)
    return False


def would_cycle(graph: PrefixGraph, new_edges: Iterable[tuple[int, int]]) -> bool:
    """True if inserting ``new_edges`` would close a directed cycle."""
    new_edges = list(new_edges)
    extra: dict[int, set[int]] = {}
    for a, b in new_edges:
        if a == b:
            return True
        extra.setdefault(a, set()).add(b)
    # the current graph is acyclic, so any new cycle runs through a new edge a -> b
    for a, b in new_edges:
        seen = {b}
        stack = [b]
        while stack:
            n = stack.pop()
            if n == a:
                return True
            for m in graph.succ.get(n, set()) | extra.get(n, set()):
                if m not in seen:
                    seen.add(m)
                    stack.append(m)
    return False


class BgpPathState:
    def __init__(self):
        self.graphs: dict[Prefix, PrefixGraph] = {}

    def copy(self) -> BgpPathState:
        new = BgpPathState()
        new.graphs = {p: g.copy() for p, g in self.graphs.items()}
        return new

    def graph(self, prefix: Prefix) -> PrefixGraph | None:
        return self.graphs.get(prefix)

    def sync_origins(self, prefix: Prefix, owners: Iterable[int], warn_stale: bool = False) -> None:
        """Reset the prefix graph to its owners' origin edges only."""
        old = self.graphs.get(prefix)
        if warn_stale and old is not None and len(old.edges()) > len(old.origins()):
            log.warning("clearing live announce edges for %s on ownership change", prefix)
        g = PrefixGraph(prefix)
        for asn in owners:
            g.add_edge(asn, SINK)
        self.graphs[prefix] = g

    def validate_announce(self, tx: Transaction, roster: Container[int]) -> Verdict:
        p: Announce = tx.input
        g = self.graphs.get(p.prefix)
        if g is None:
            return Verdict.invalid(Reason.UNKNOWN_PREFIX, f"no graph for {p.prefix}")
        if not p.as_source_list:
            if SINK not in g.succ.get(p.as_source, ()):
                return Verdict.invalid(Reason.INVALID_ORIGIN, f"AS{p.as_source} is not an origin of {p.prefix}")
        else:
            learned = g.succ.get(p.as_source, set())
            for s in p.as_source_list:
                if s not in learned:
                    return Verdict.invalid(Reason.NO_PATH, f"AS{p.as_source} has no route learned from AS{s}")
                if not has_path(g, s):
                    return Verdict.invalid(Reason.NO_PATH, f"AS{s} has no path to {p.prefix}")
        for asn in (*p.as_source_list, *p.as_dest_list):
            if asn not in roster:
                return Verdict.invalid(Reason.UNKNOWN_PARTICIPANT, f"AS{asn} is not in the network")
        if would_cycle(g, [(d, p.as_source) for d in p.as_dest_list]):
            return Verdict.invalid(Reason.LOOP_DETECTED)
        return Verdict.valid()

    def apply_announce(self, tx: Transaction) -> None:
        p: Announce = tx.input
        g = self.graphs[p.prefix]
        for d in p.as_dest_list:
            g.add_edge(d, p.as_source)

    def validate_withdraw(self, tx: Transaction) -> Verdict:
        p: Withdraw = tx.input
        g = self.graphs.get(p.prefix)
        if g is None:
            return Verdict.invalid(Reason.UNKNOWN_PREFIX, f"no graph for {p.prefix}")
        if not has_path(g, p.as_source):
            return Verdict.invalid(Reason.NO_PATH, f"AS{p.as_source} has no path to {p.prefix}")
        return Verdict.valid()

    def apply_withdraw(self, tx: Transaction) -> None:
        p: Withdraw = tx.input
        g = self.graphs[p.prefix]
        for a in list(g.pred.get(p.as_source, ())):
            g.succ[a].discard(p.as_source)
        g.pred[p.as_source] = set()
        alive = g.reaching_sink()
        for n in [n for n in g.succ if n not in alive]:
            g.remove_node(n)

    def dump(self) -> str:
        return "".join(self.graphs[p].to_dot() for p in sorted(self.graphs, key=prefix_key))

    def to_dict(self) -> dict:
        return {"graphs": [self.graphs[p].to_dict() for p in sorted(self.graphs, key=prefix_key)]}
