"""Command line entry point: ``prefixchain <command> ...``.

Exit codes: 0 success, 1 operational failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import collections
import json
import logging
import os
import sys
import time
from pathlib import Path
from typing import Any, Sequence

import requests

from . import __version__
from .attacks import SCENARIOS, AttackContext, AttackUnavailable, build_attack
from .errors import DuplicateAllocation, MalformedKey, PrefixChainError
from .ingestion import (
    ParseStats,
    allocations_from_pfx2as,
    parse_pfx2as,
    parse_updates,
    participants,
    read_genesis_csv,
    transactions_from_updates,
    write_genesis_csv,
)
from .keys import KeyPair, Keyring
from .ledger import build_genesis_block, parse_prefix
from .overlay import load_roster, signed_identity

log = logging.getLogger("prefixchain")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
DEFAULT_NODE_URL = "http://127.0.0.1:7000"
# attacker identity used by `attack` when no key is given (private-use ASN range)
DEFAULT_ATTACKER_ASN = 4_200_000_000


class CommandError(Exception):
    """Operational failure; reported on stderr with exit code 1."""


# -- small HTTP client ----------------------------------------------------

class NodeClient:
    def __init__(self, url: str, timeout: float = 30.0):
        self.url = url.rstrip("/")
        self.timeout = timeout
        self.session = requests.Session()

    def call(self, method: str, path: str, body: Any = None) -> tuple[int, Any]:
        try:
            r = self.session.request(method, self.url + path, json=body, timeout=self.timeout)
        except requests.RequestException as exc:
            raise CommandError(f"cannot reach {self.url}: {exc}") from exc
        try:
            return r.status_code, r.json() if r.content else None
        except ValueError:
            raise CommandError(f"{self.url}{path} returned non-JSON ({r.status_code})") from None

    def get(self, path: str) -> Any:
        status, doc = self.call("GET", path)
        if status != 200:
            raise CommandError(f"GET {path} failed with {status}: {doc}")
        return doc


def _emit(args: argparse.Namespace, doc: Any, text: str) -> None:
    if getattr(args, "format", "text") == "json":
        print(json.dumps(doc, indent=2, sort_keys=True))
    else:
        print(text, end="" if text.endswith("\n") else "\n")


# -- node -----------------------------------------------------------------

NODE_OPTIONS = {
    # name: (type, default)
    "listen": (str, None),
    "advertise": (str, None),
    "asn": (int, None),
    "key": (str, None),
    "bootstrap": (str, ""),
    "difficulty": (int, 4),
    "mine": (bool, False),
    "genesis": (str, None),
    "auto_revoke": (bool, False),
    "max_tx": (int, 100),
    "roster": (str, None),
}


def _coerce(kind: type, value: Any) -> Any:
    if kind is bool and isinstance(value, str):
        return value.strip().lower() in ("1", "true", "yes", "on")
    return kind(value)


def resolve_node_config(args: argparse.Namespace, environ: dict[str, str] | None = None) -> dict[str, Any]:
    """Merge settings: command-line flags, then PREFIXCHAIN_* variables, then the config file."""
    environ = os.environ if environ is None else environ
    filecfg: dict[str, Any] = {}
    config_path = args.config or environ.get("PREFIXCHAIN_CONFIG")
    if config_path:
        try:
            filecfg = json.loads(Path(config_path).read_text())
        except (OSError, ValueError) as exc:
            raise CommandError(f"cannot read config {config_path}: {exc}") from exc
    out = {}
    for name, (kind, default) in NODE_OPTIONS.items():
        flag = getattr(args, name)
        env = environ.get("PREFIXCHAIN_" + name.upper())
        if flag is not None:
            out[name] = flag
        elif env is not None:
            out[name] = _coerce(kind, env)
        elif name in filecfg or name.replace("_", "-") in filecfg:
            out[name] = _coerce(kind, filecfg.get(name, filecfg.get(name.replace("_", "-"))))
        else:
            out[name] = default
    return out


def _hostport(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError(f"expected ADDR:PORT, got {text!r}")
    return host or "0.0.0.0", int(port)


def cmd_node(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    from .daemon import HttpTransport, NodeServer
    from .node import Node

    cfg = resolve_node_config(args)
    missing = [f"--{n.replace('_', '-')}" for n in ("listen", "asn", "key", "genesis") if cfg[n] is None]
    if missing:
        parser.error(f"node: missing required setting(s): {', '.join(missing)}")
    try:
        host, port = _hostport(cfg["listen"])
        bootstrap = [_hostport(b) for b in cfg["bootstrap"].split(",") if b.strip()]
    except ValueError as exc:
        parser.error(str(exc))

    keypair = KeyPair.load(cfg["key"])
    with open(cfg["genesis"]) as f:
        genesis = build_genesis_block(read_genesis_csv(f))
    roster = load_roster(cfg["roster"]) if cfg["roster"] else None
    transport = HttpTransport()
    advertise = cfg["advertise"] or (host if host not in ("0.0.0.0", "") else "127.0.0.1")
    node = Node(
        cfg["asn"], keypair, genesis,
        address=advertise, port=port, difficulty=cfg["difficulty"],
        transport=transport, max_tx=cfg["max_tx"], roster=roster,
    )
    try:
        server = NodeServer(node, host, port, mine=cfg["mine"], auto_revoke=cfg["auto_revoke"])
    except OSError as exc:
        raise CommandError(f"cannot listen on {host}:{port}: {exc}") from exc
    server.start()
    log.info("AS%d listening on %s:%d, genesis %s", cfg["asn"], host, server.port, genesis.hash)
    if bootstrap:
        node.join(bootstrap)
        log.info("joined; %d peers", len(node.peers))
    try:
        server.serve_forever()
    finally:
        transport.close()
    return EXIT_OK


# -- offline commands -----------------------------------------------------

def cmd_keygen(args: argparse.Namespace) -> int:
    out = Path(args.out)
    if out.exists() and not args.force:
        raise CommandError(f"{out} exists; pass --force to overwrite")
    kp = KeyPair.generate()
    kp.save(out)
    print(kp.public_hex)
    return EXIT_OK


def cmd_genesis(args: argparse.Namespace) -> int:
    stats = ParseStats()
    with open(args.pfx2as) as f:
        allocations = allocations_from_pfx2as(parse_pfx2as(f, stats))
    if args.out == "-":
        n = write_genesis_csv(allocations, sys.stdout)
    else:
        with open(args.out, "w") as f:
            n = write_genesis_csv(allocations, f)
    block = build_genesis_block(allocations)
    print(f"{n} allocations, {stats.skipped} lines skipped, genesis hash {block.hash}", file=sys.stderr)
    return EXIT_OK


# -- clients of a running node --------------------------------------------

def _register_participants(client: NodeClient, keyring: Keyring, asns: Sequence[int]) -> dict[str, int]:
    counts: collections.Counter = collections.Counter()
    for asn in sorted(asns):
        status, _ = client.call("POST", "/peers/register", signed_identity(keyring[asn], asn, "0.0.0.0", 0).record())
        counts["registered" if status == 200 else f"refused_{status}"] += 1
    return dict(counts)


def cmd_replay(args: argparse.Namespace) -> int:
    stats = ParseStats()
    with open(args.updates) as f:
        records = parse_updates(f, stats)
    keyring = Keyring(args.seed)
    asns = participants(records)
    if args.pfx2as:
        with open(args.pfx2as) as f:
            for r in parse_pfx2as(f):
                asns.update(r.origins)
    txs = transactions_from_updates(records, keyring, merge_window=args.merge_window, stats=stats)
    client = NodeClient(args.node)
    registration = _register_participants(client, keyring, asns) if txs else {}

    accepted = 0
    reasons: collections.Counter = collections.Counter()
    for tx in txs:
        status, doc = client.call("POST", "/transactions", tx.to_dict())
        if status == 202:
            accepted += 1
        else:
            reasons[(doc or {}).get("reason", f"HTTP {status}")] += 1
    summary = {
        "records": stats.parsed,
        "skipped_records": stats.skipped,
        "transactions": len(txs),
        "accepted": accepted,
        "rejected": sum(reasons.values()),
        "reasons": dict(sorted(reasons.items())),
        "participants": registration,
    }
    lines = [
        f"records     {stats.parsed} parsed, {stats.skipped} skipped",
        f"submitted   {len(txs)}",
        f"accepted    {accepted}",
        f"rejected    {summary['rejected']}",
    ]
    lines += [f"  {reason:<22}{n}" for reason, n in summary["reasons"].items()]
    _emit(args, summary, "\n".join(lines))
    return EXIT_OK


def cmd_attack(args: argparse.Namespace) -> int:
    client = NodeClient(args.node)
    asn = args.asn
    # without a key file, use a key derived from the ASN so reruns reuse one identity
    key = KeyPair.load(args.key) if args.key else KeyPair.from_seed(f"prefixchain-attacker:{asn}".encode())
    status, doc = client.call("POST", "/peers/register", signed_identity(key, asn, "0.0.0.0", 0).record())
    if status != 200:
        raise CommandError(f"target refused attacker identity AS{asn}: {doc}")
    registry = {int(a) for a in client.get("/registry")}
    now = client.get("/ping").get("now", int(time.time()))

    def in_graph(prefix, who):
        st, g = client.call("GET", f"/state/graph?prefix={prefix}")
        return st == 200 and who in g["graph"]["nodes"]

    ctx = AttackContext.from_ip_doc(client.get("/state/ip")["state"], registry, asn, key, now, in_graph)
    try:
        tx, expected = build_attack(args.scenario, ctx)
    except AttackUnavailable as exc:
        raise CommandError(f"{args.scenario}: {exc}") from exc
    status, reply = client.call("POST", "/transactions", tx.to_dict())
    reason = (reply or {}).get("reason")
    logged = [e for e in client.get("/log")["invalid"] if e["txid"] == tx.txid]
    ok = status == 422 and reason == str(expected) and len(logged) == 1
    report = {
        "scenario": args.scenario,
        "txid": tx.txid,
        "status": status,
        "reason": reason,
        "expected": str(expected),
        "logged": len(logged),
        "ok": ok,
    }
    verdict = "rejected as expected" if ok else "NOT rejected as expected"
    _emit(args, report, f"{args.scenario}: {verdict} (status {status}, reason {reason}, expected {expected}, log entries {len(logged)})")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_inspect(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    client = NodeClient(args.node)
    what = args.what
    if what == "chain":
        doc = client.get("/chain")
        rows = [
            {"index": b["index"], "hash": b["hash"], "miner": b["miner"], "txs": len(b["transactions"])}
            for b in doc["blocks"]
        ]
        text = "\n".join(f"{r['index']:>6}  {r['hash']}  AS{r['miner']:<10}  {r['txs']} tx" for r in rows)
        _emit(args, rows, text)
    elif what == "ipstate":
        doc = client.get("/state/ip")
        _emit(args, doc["state"], doc["dump"] or "(empty)\n")
    elif what == "graph":
        if not args.prefix:
            parser.error("inspect graph needs a PREFIX")
        try:
            prefix = parse_prefix(args.prefix)
        except ValueError as exc:
            parser.error(str(exc))
        status, doc = client.call("GET", f"/state/graph?prefix={prefix}")
        if status != 200:
            raise CommandError(f"no graph for {prefix}")
        _emit(args, doc["graph"], doc["dot"])
    elif what == "log":
        doc = client.get("/log")
        lines = [
            f"{e['received_at']}  {e['txid'][:16]}  {e['type']:<14} AS{e['creator']:<10} {e['reason']}  {e['detail']}"
            for e in doc["invalid"]
        ]
        lines += [f"chain from AS{c.get('peer')}: {c['reason']} {c.get('detail', '')}" for c in doc["chains"]]
        _emit(args, doc, "\n".join(lines) if lines else "(no invalid transactions)")
    return EXIT_OK


# -- parser ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="prefixchain", description="Ledger of IP prefix allocations and BGP paths.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    n = sub.add_parser("node", help="run a node daemon")
    n.set_defaults(subparser=n)
    n.add_argument("--listen", metavar="ADDR:PORT")
    n.add_argument("--advertise", metavar="ADDR", help="address put in the identity record")
    n.add_argument("--asn", type=int)
    n.add_argument("--key", metavar="FILE")
    n.add_argument("--bootstrap", metavar="ADDR:PORT[,...]")
    n.add_argument("--difficulty", type=int)
    n.add_argument("--mine", action="store_const", const=True)
    n.add_argument("--genesis", metavar="FILE", help="prefix,asn CSV")
    n.add_argument("--auto-revoke", dest="auto_revoke", action="store_const", const=True)
    n.add_argument("--max-tx", dest="max_tx", type=int)
    n.add_argument("--roster", metavar="FILE", help='static {"asn": "pubkey hex"} key registry')
    n.add_argument("--config", metavar="FILE", help="JSON file with the same settings")

    k = sub.add_parser("keygen", help="write a new key pair")
    k.add_argument("out")
    k.add_argument("--force", action="store_true")

    g = sub.add_parser("genesis", help="convert a pfx2as file to a genesis CSV")
    g.add_argument("pfx2as")
    g.add_argument("-o", "--out", default="-")

    node_url = os.environ.get("PREFIXCHAIN_NODE", DEFAULT_NODE_URL)

    r = sub.add_parser("replay", help="turn a BGP update log into transactions and submit them")
    r.add_argument("updates")
    r.add_argument("--node", default=node_url)
    r.add_argument("--pfx2as", help="also register the origin ASes listed here")
    r.add_argument("--merge-window", dest="merge_window", type=int, default=0)
    r.add_argument("--seed", default="replay", help="seed for the simulation keys of replayed ASes")
    r.add_argument("--format", choices=("text", "json"), default="text")

    a = sub.add_parser("attack", help="send a canned invalid transaction and check it is rejected")
    a.add_argument("scenario", choices=sorted(SCENARIOS))
    a.add_argument("--node", default=node_url)
    a.add_argument("--key", help="attacker key file (default: a fixed key derived from --asn)")
    a.add_argument("--asn", type=int, default=DEFAULT_ATTACKER_ASN)
    a.add_argument("--format", choices=("text", "json"), default="text")

    i = sub.add_parser("inspect", help="show chain, IP state, a prefix graph or the invalid log")
    i.set_defaults(subparser=i)
    i.add_argument("what", choices=("chain", "ipstate", "graph", "log"))
    i.add_argument("prefix", nargs="?")
    i.add_argument("--node", default=node_url)
    i.add_argument("--format", choices=("text", "json"), default="text")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2) if args.command != "node" else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    sub = getattr(args, "subparser", parser)
    try:
        if args.command == "node":
            return cmd_node(args, sub)
        if args.command == "keygen":
            return cmd_keygen(args)
        if args.command == "genesis":
            return cmd_genesis(args)
        if args.command == "replay":
            return cmd_replay(args)
        if args.command == "attack":
            return cmd_attack(args)
        return cmd_inspect(args, sub)
    except (CommandError, DuplicateAllocation, MalformedKey, PrefixChainError, OSError, ValueError) as exc:
        print(f"prefixchain {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
