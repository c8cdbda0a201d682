"""Canned invalid transactions used to probe a node's validation.

Each scenario builds one transaction that a correct node must reject with a
known reason. The attacker is an AS whose key is registered with the target
but which owns no prefix and has no route, so every transaction other than
the forged one is correctly signed; only the scenario's one defect can get
it rejected.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

from .errors import PrefixChainError, Reason
from .keys import KeyPair
from .ledger import INFINITE_LEASE, Announce, Assign, Prefix, Revoke, Transaction, TxId, Update, Withdraw, parse_prefix, prefix_key
from .state import LedgerState


class AttackUnavailable(PrefixChainError):
    """The target's state offers nothing this scenario can be aimed at."""


@dataclass
class AttackContext:
    attacker_asn: int
    attacker_key: KeyPair
    now: int
    #: prefix -> owner -> (remaining source lease at ``now``, last_assign)
    owners: dict[Prefix, dict[int, tuple[int, TxId]]]
    assigns: dict[TxId, Assign]
    registered: set[int]
    in_graph: Callable[[Prefix, int], bool] = field(default=lambda p, a: False)

    @classmethod
    def from_state(cls, state: LedgerState, registry: Iterable[int], attacker_asn: int, key: KeyPair, now: int) -> AttackContext:
        ip = state.ip
        owners = {
            p: {o: (r.remaining(now), r.last_assign) for o, r in ip.records[p].items()} for p in ip.prefixes()
        }
        assigns = {t: e.payload for t, e in ip.assigns.items()}

        def in_graph(prefix: Prefix, asn: int) -> bool:
            g = state.bgp.graph(prefix)
            return g is not None and asn in g.succ

        return cls(attacker_asn, key, now, owners, assigns, set(registry), in_graph)

    @classmethod
    def from_ip_doc(
        cls,
        doc: Mapping,
        registry: Iterable[int],
        attacker_asn: int,
        key: KeyPair,
        now: int,
        in_graph: Callable[[Prefix, int], bool] | None = None,
    ) -> AttackContext:
        """Build from the JSON document served at ``GET /state/ip``."""
        owners: dict[Prefix, dict[int, tuple[int, TxId]]] = {}
        for r in doc["records"]:
            expiry = r["lease_expiry"]
            remaining = INFINITE_LEASE if expiry == INFINITE_LEASE else max(0, expiry - now)
            owners.setdefault(parse_prefix(r["prefix"]), {})[r["owner"]] = (remaining, r["last_assign"])
        assigns = {a["txid"]: Assign.from_dict(a["input"]) for a in doc["assigns"]}
        ctx = cls(attacker_asn, key, now, owners, assigns, set(registry))
        if in_graph is not None:
            ctx.in_graph = in_graph
        return ctx

    # helpers ------------------------------------------------------------

    def foreign_prefixes(self) -> list[Prefix]:
        """Prefixes the attacker does not hold, with at least one other owner."""
        return [
            p for p in sorted(self.owners, key=prefix_key)
            if self.attacker_asn not in self.owners[p] and self.owners[p]
        ]

    def victim(self, prefix: Prefix) -> int:
        cands = sorted(self.owners[prefix])
        registered = [a for a in cands if a in self.registered]
        return (registered or cands)[0]

    def sign(self, payload, creator: int | None = None, lookup=None) -> Transaction:
        return Transaction.create(payload, self.now, self.attacker_key, creator=creator, lookup_assign=lookup)


def _fake_creator(ctx: AttackContext) -> Transaction:
    # an origin announce that would be valid if the owner had signed it
    for p in ctx.foreign_prefixes():
        v = ctx.victim(p)
        if v in ctx.registered:
            return ctx.sign(Announce(p, v, (), (ctx.attacker_asn,)), creator=v)
    raise AttackUnavailable("no prefix owned by a registered AS other than the attacker")


def _first_foreign(ctx: AttackContext) -> Prefix:
    prefixes = ctx.foreign_prefixes()
    if not prefixes:
        raise AttackUnavailable("no prefix owned by someone other than the attacker")
    return prefixes[0]


def _nonowner_assign(ctx: AttackContext) -> Transaction:
    p = _first_foreign(ctx)
    v = ctx.victim(p)
    remaining, last_assign = ctx.owners[p][v]
    remaining = max(remaining, 1)
    return ctx.sign(Assign(p, ctx.attacker_asn, (v,), remaining, min(3600, remaining), True, last_assign))


def _foreign_assign(ctx: AttackContext) -> TxId:
    for txid in sorted(ctx.assigns):
        a = ctx.assigns[txid]
        if a.as_source != ctx.attacker_asn and ctx.attacker_asn not in a.as_dest:
            return txid
    raise AttackUnavailable("no Assign made by another AS exists on the target")


def _nonassigner_update(ctx: AttackContext) -> Transaction:
    txid = _foreign_assign(ctx)
    new_lease = max(1, ctx.assigns[txid].lease_duration // 2)
    return ctx.sign(Update(ctx.attacker_asn, txid, new_lease), lookup=ctx.assigns.get)


def _nonassigner_revoke(ctx: AttackContext) -> Transaction:
    txid = _foreign_assign(ctx)
    return ctx.sign(Revoke(ctx.attacker_asn, txid), lookup=ctx.assigns.get)


def _bogus_origin(ctx: AttackContext) -> Transaction:
    p = _first_foreign(ctx)
    return ctx.sign(Announce(p, ctx.attacker_asn, (), (ctx.victim(p),)))


def _pathless_withdraw(ctx: AttackContext) -> Transaction:
    for p in ctx.foreign_prefixes():
        if not ctx.in_graph(p, ctx.attacker_asn):
            return ctx.sign(Withdraw(p, ctx.attacker_asn))
    raise AttackUnavailable("attacker has a route to every prefix")


@dataclass(frozen=True)
class Scenario:
    name: str
    build: Callable[[AttackContext], Transaction]
    expected: Reason
    summary: str


SCENARIOS: dict[str, Scenario] = {
    s.name: s
    for s in (
        Scenario("fake-creator", _fake_creator, Reason.BAD_SIGNATURE, "announce claiming another AS as creator"),
        Scenario("nonowner-assign", _nonowner_assign, Reason.NOT_OWNER, "assign of a prefix the sender does not own"),
        Scenario("nonassigner-update", _nonassigner_update, Reason.NOT_ASSIGNER, "update of someone else's assign"),
        Scenario("nonassigner-revoke", _nonassigner_revoke, Reason.NOT_ASSIGNER, "revoke of someone else's assign"),
        Scenario("bogus-origin-announce", _bogus_origin, Reason.INVALID_ORIGIN, "origin announce by a non-owner"),
        Scenario("pathless-withdraw", _pathless_withdraw, Reason.NO_PATH, "withdraw by an AS with no route"),
    )
}


def build_attack(name: str, ctx: AttackContext) -> tuple[Transaction, Reason]:
    try:
        s = SCENARIOS[name]
    except KeyError:
        raise ValueError(f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}") from None
    return s.build(ctx), s.expected
