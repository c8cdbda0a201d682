"""Genesis bootstrap from prefix-to-AS data and BGP update replay.

Input grammars
--------------

pfx2as (one mapping per line, tab separated)::

    address<TAB>prefix_len<TAB>asn_spec

``asn_spec`` is one ASN, an underscore-joined multi-origin set (``1_2``) or a
comma-joined list (``1,2``). Lines that do not parse are skipped and counted.

Genesis CSV: ``prefix,asn`` one pair per line; ``#`` starts a comment.

Update log (one record per line, pipe separated)::

    timestamp|A|prefix|as path, collector side first, space separated
    timestamp|W|prefix|withdrawing_asn

The ASN of a ``W`` record may be left empty; the withdraw is then attributed
to the first AS of the most recent announce path seen for that prefix.
"""

from __future__ import annotations

import csv
import graphlib
import logging
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, TextIO

from .errors import InvalidPayload
from .keys import KeyPair
from .ledger import Announce, Prefix, Transaction, Withdraw, check_asn, parse_prefix, prefix_key

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Pfx2AsRecord:
    prefix: Prefix
    origins: tuple[int, ...]


@dataclass(frozen=True)
class BgpUpdateRecord:
    timestamp: int
    kind: str  # "A" or "W"
    prefix: Prefix
    as_path: tuple[int, ...] = ()
    withdrawer: int | None = None


@dataclass(frozen=True)
class AsTriplet:
    previous: int | None
    advertiser: int
    next: int | None


@dataclass
class ParseStats:
    parsed: int = 0
    skipped: int = 0
    errors: list[str] = field(default_factory=list)

    def skip(self, lineno: int, why: str) -> None:
        self.skipped += 1
        if len(self.errors) < 50:
            self.errors.append(f"line {lineno}: {why}")


def _lines(source: TextIO | Iterable[str]) -> Iterator[tuple[int, str]]:
    for lineno, raw in enumerate(source, 1):
        line = raw.strip()
        if line and not line.startswith("#"):
            yield lineno, line


def _parse_asn(text: str) -> int:
    asn = int(text)
    check_asn(asn)
    return asn


def parse_pfx2as(source: TextIO | Iterable[str], stats: ParseStats | None = None) -> list[Pfx2AsRecord]:
    stats = stats if stats is not None else ParseStats()
    out = []
    for lineno, line in _lines(source):
        cols = line.split("\t")
        try:
            if len(cols) != 3:
                raise ValueError(f"expected 3 columns, got {len(cols)}")
            prefix = parse_prefix(f"{cols[0]}/{int(cols[1])}")
            spec = cols[2].replace("_", ",")
            origins = tuple(dict.fromkeys(_parse_asn(a) for a in spec.split(",")))
        except (ValueError, InvalidPayload) as exc:
            stats.skip(lineno, str(exc))
            continue
        stats.parsed += 1
        out.append(Pfx2AsRecord(prefix, origins))
    return out


def allocations_from_pfx2as(records: Iterable[Pfx2AsRecord]) -> list[tuple[Prefix, int]]:
    seen = set()
    out = []
    for r in records:
        for asn in r.origins:
            if (r.prefix, asn) not in seen:
                seen.add((r.prefix, asn))
                out.append((r.prefix, asn))
    return out


def read_genesis_csv(source: TextIO | Iterable[str]) -> list[tuple[Prefix, int]]:
    """Read ``prefix,asn`` pairs. Duplicates are kept so genesis building can reject them."""
    out = []
    rows = (line for _, line in _lines(source))
    for row in csv.reader(rows):
        if len(row) != 2:
            raise ValueError(f"genesis row must be prefix,asn: {row!r}")
        out.append((parse_prefix(row[0].strip()), _parse_asn(row[1].strip())))
    return out


def write_genesis_csv(allocations: Iterable[tuple[Prefix, int]], out: TextIO) -> int:
    w = csv.writer(out, lineterminator="\n")
    n = 0
    for prefix, asn in allocations:
        w.writerow([str(prefix), asn])
        n += 1
    return n


def collapse_prepends(path: Iterable[int]) -> tuple[int, ...]:
    out: list[int] = []
    for asn in path:
        if not out or out[-1] != asn:
            out.append(asn)
    return tuple(out)


def parse_updates(source: TextIO | Iterable[str], stats: ParseStats | None = None) -> list[BgpUpdateRecord]:
    stats = stats if stats is not None else ParseStats()
    out = []
    for lineno, line in _lines(source):
        cols = line.split("|")
        try:
            if len(cols) != 4:
                raise ValueError(f"expected 4 fields, got {len(cols)}")
            ts = int(cols[0])
            if ts < 0:
                raise ValueError("negative timestamp")
            prefix = parse_prefix(cols[2].strip())
            if cols[1] == "A":
                tokens = cols[3].split()
                if any(not t.isdigit() for t in tokens):
                    raise ValueError(f"AS path holds a non-ASN element (AS-set?): {cols[3]!r}")
                path = collapse_prepends(_parse_asn(t) for t in tokens)
                if not path:
                    raise ValueError("empty AS path")
                rec = BgpUpdateRecord(ts, "A", prefix, path)
            elif cols[1] == "W":
                who = cols[3].strip()
                rec = BgpUpdateRecord(ts, "W", prefix, (), _parse_asn(who) if who else None)
            else:
                raise ValueError(f"unknown record kind {cols[1]!r}")
        except (ValueError, InvalidPayload) as exc:
            stats.skip(lineno, str(exc))
            continue
        stats.parsed += 1
        out.append(rec)
    return out


def format_update(rec: BgpUpdateRecord) -> str:
    if rec.kind == "A":
        return f"{rec.timestamp}|A|{rec.prefix}|{' '.join(map(str, rec.as_path))}"
    return f"{rec.timestamp}|W|{rec.prefix}|{'' if rec.withdrawer is None else rec.withdrawer}"


def triplets_from_path(as_path: Iterable[int]) -> list[AsTriplet]:
    """Split a collector-first AS path into (previous, advertiser, next) steps."""
    path = collapse_prepends(as_path)
    if not path:
        raise ValueError("empty AS path")
    if len(set(path)) != len(path):
        raise ValueError(f"AS path contains a loop: {path}")
    n = len(path)
    return [
        AsTriplet(path[i + 1] if i + 1 < n else None, path[i], path[i - 1] if i > 0 else None)
        for i in range(n)
    ]


def path_from_triplets(triplets: Iterable[AsTriplet]) -> tuple[int, ...]:
    """Inverse of :func:`triplets_from_path`: chain the steps back into a path."""
    by_next = {t.next: t for t in triplets}
    out = []
    cur = by_next.get(None)
    while cur is not None:
        out.append(cur.advertiser)
        cur = by_next.get(cur.advertiser)
    return tuple(out)


def participants(records: Iterable[BgpUpdateRecord]) -> set[int]:
    out = set()
    for r in records:
        out.update(r.as_path)
        if r.withdrawer is not None:
            out.add(r.withdrawer)
    return out


class _Group:
    """Announce triplets for one prefix, buffered until the merge window closes."""

    def __init__(self, prefix: Prefix, start: int):
        self.prefix = prefix
        self.start = start
        self.last = start
        self.learned: dict[int, set[int]] = {}
        self.told: dict[int, set[int]] = {}

    def add(self, t: AsTriplet, ts: int) -> None:
        self.last = max(self.last, ts)
        self.learned.setdefault(t.advertiser, set())
        self.told.setdefault(t.advertiser, set()).add(t.next)
        if t.previous is not None:
            self.learned[t.advertiser].add(t.previous)

    def ordered(self) -> list[int]:
        # advertisers before the ASes that learned from them; ties broken by ASN
        ts = graphlib.TopologicalSorter({a: self.learned[a] & self.learned.keys() for a in self.learned})
        ts.prepare()
        order = []
        while ts.is_active():
            ready = sorted(ts.get_ready())
            order.extend(ready)
            ts.done(*ready)
        return order


def transactions_from_updates(
    records: Iterable[BgpUpdateRecord],
    keyring: Mapping[int, KeyPair],
    merge_window: int = 0,
    stats: ParseStats | None = None,
) -> list[Transaction]:
    """Turn update records into Announce/Withdraw transactions, ordered origin outward.

    Triplets for the same prefix whose records fall within ``merge_window``
    seconds of the first one are merged per advertiser. Triplets already
    emitted for a prefix are not re-emitted until a withdraw for it is seen.
    """
    stats = stats if stats is not None else ParseStats()
    out: list[Transaction] = []
    groups: dict[Prefix, _Group] = {}
    emitted: dict[Prefix, set[tuple]] = {}
    last_path: dict[Prefix, tuple[int, ...]] = {}

    def flush(prefix: Prefix) -> None:
        g = groups.pop(prefix, None)
        if g is None:
            return
        for adv in g.ordered():
            dests = tuple(sorted(d for d in g.told[adv] if d is not None))
            if not dests:
                continue
            payload = Announce(prefix, adv, tuple(sorted(g.learned[adv])), dests)
            out.append(Transaction.create(payload, g.last, keyring[adv]))

    for lineno, rec in enumerate(sorted(records, key=lambda r: r.timestamp), 1):
        p = rec.prefix
        g = groups.get(p)
        if g is not None and (rec.kind == "W" or rec.timestamp > g.start + merge_window):
            flush(p)
            g = None
        if rec.kind == "W":
            who = rec.withdrawer
            if who is None:
                path = last_path.get(p)
                if not path:
                    stats.skip(lineno, f"withdraw for {p} with no known announcer")
                    continue
                who = path[0]
            out.append(Transaction.create(Withdraw(p, who), rec.timestamp, keyring[who]))
            emitted.pop(p, None)
            continue
        try:
            triplets = triplets_from_path(rec.as_path)
        except ValueError as exc:
            stats.skip(lineno, str(exc))
            continue
        last_path[p] = rec.as_path
        seen = emitted.setdefault(p, set())
        for t in triplets:
            if t.next is None or (t.previous, t.advertiser, t.next) in seen:
                continue
            seen.add((t.previous, t.advertiser, t.next))
            if g is None:
                g = groups[p] = _Group(p, rec.timestamp)
            g.add(t, rec.timestamp)
    for p in sorted(groups, key=prefix_key):
        flush(p)
    return out


def oracle_edges(records: Iterable[BgpUpdateRecord]) -> dict[Prefix, set[tuple[int, int]]]:
    """Per-prefix edge sets straight from announce paths (traffic direction, sink = 0)."""
    out: dict[Prefix, set[tuple[int, int]]] = {}
    for r in records:
        if r.kind != "A":
            continue
        path = collapse_prepends(r.as_path)
        edges = out.setdefault(r.prefix, set())
        edges.update(zip(path, path[1:]))
        edges.add((path[-1], 0))
    return out

