import json
import os
import socket
import subprocess
import sys
import time

import pytest
import requests

from prefixchain import cli
from prefixchain.daemon import HttpTransport, NodeServer, wait_until_up
from prefixchain.keys import KeyPair, Keyring, verify
from prefixchain.ledger import build_genesis_block
from prefixchain.node import Node

from conftest import P, Q


def run_cli(*argv):
    return cli.main([str(a) for a in argv])


# -- offline commands ---------------------------------------------------------

def test_keygen_refuses_then_forces(tmp_path, capsys):
    out = tmp_path / "k.key"
    assert run_cli("keygen", out) == 0
    pub = capsys.readouterr().out.strip()
    kp = KeyPair.load(out)
    assert kp.public_hex == pub and verify(kp.public, b"m", kp.sign(b"m"))
    assert run_cli("keygen", out) == 1
    assert KeyPair.load(out).public_hex == pub
    assert run_cli("keygen", out, "--force") == 0
    assert KeyPair.load(out).public_hex != pub


def test_genesis_from_pfx2as(tmp_path, capsys):
    src = tmp_path / "p.txt"
    src.write_text("10.0.0.0\t8\t1_2\n192.168.0.0\t16\t3\nbad\n")
    dst = tmp_path / "g.csv"
    assert run_cli("genesis", src, "-o", dst) == 0
    assert dst.read_text() == "10.0.0.0/8,1\n10.0.0.0/8,2\n192.168.0.0/16,3\n"
    assert "1 lines skipped" in capsys.readouterr().err


def test_missing_asn_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as exc:
        run_cli("node", "--listen", "127.0.0.1:0", "--key", tmp_path / "k", "--genesis", tmp_path / "g")
    assert exc.value.code == 2


def test_unknown_attack_scenario_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        run_cli("attack", "nope")
    assert exc.value.code == 2


def test_duplicate_genesis_is_fatal(tmp_path, capsys):
    key = tmp_path / "k.key"
    KeyPair.generate().save(key)
    g = tmp_path / "g.csv"
    g.write_text("10.0.0.0/8,1\n10.0.0.0/8,1\n")
    assert run_cli("node", "--listen", "127.0.0.1:0", "--asn", 1, "--key", key, "--genesis", g) == 1
    assert "DuplicateAllocation" in capsys.readouterr().err


def test_config_precedence(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"asn": 3, "difficulty": 2, "max-tx": 7, "mine": True}))
    args = cli.build_parser().parse_args(["node", "--config", str(cfg), "--asn", "1"])
    out = cli.resolve_node_config(args, {"PREFIXCHAIN_ASN": "2", "PREFIXCHAIN_DIFFICULTY": "5"})
    assert out["asn"] == 1            # flag beats env and file
    assert out["difficulty"] == 5     # env beats file
    assert out["max_tx"] == 7 and out["mine"] is True
    assert out["bootstrap"] == "" and out["auto_revoke"] is False


# -- against a live node ------------------------------------------------------

@pytest.fixture
def live():
    genesis = build_genesis_block([(P, 1), (Q, 2)])
    transport = HttpTransport()
    node = Node(1, Keyring("cli")[1], genesis, address="127.0.0.1", port=0, difficulty=1, transport=transport)
    server = NodeServer(node, "127.0.0.1", 0, mine=True, idle_wait=0.05).start()
    url = f"http://127.0.0.1:{server.port}"
    assert wait_until_up(url)
    yield url, node
    server.stop()
    transport.close()


def test_inspect_fresh_chain(live, capsys):
    url, _ = live
    assert run_cli("inspect", "chain", "--node", url, "--format", "json") == 0
    rows = json.loads(capsys.readouterr().out)
    assert len(rows) == 1 and rows[0]["index"] == 0


def test_inspect_graph(live, capsys):
    url, _ = live
    assert run_cli("inspect", "graph", "10.0.0.0/8", "--node", url) == 0
    assert "digraph" in capsys.readouterr().out
    assert run_cli("inspect", "graph", "11.0.0.0/8", "--node", url) == 1


def test_replay_and_attack(live, tmp_path, capsys):
    url, node = live
    upd = tmp_path / "u.txt"
    upd.write_text("")
    assert run_cli("replay", upd, "--node", url, "--format", "json") == 0
    assert json.loads(capsys.readouterr().out)["transactions"] == 0

    assert run_cli("attack", "bogus-origin-announce", "--node", url, "--format", "json") == 0
    report = json.loads(capsys.readouterr().out)
    assert report["ok"] and report["reason"] == "InvalidOrigin"
    assert run_cli("inspect", "log", "--node", url, "--format", "json") == 0
    assert len(json.loads(capsys.readouterr().out)["invalid"]) == 1


def _free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def test_node_daemon_replay_subprocess(tmp_path, capsys):
    """Full path: a real daemon process, replay of a consistent stream and of a hijack."""
    key = tmp_path / "n.key"
    KeyPair.generate().save(key)
    g = tmp_path / "g.csv"
    g.write_text("10.0.0.0/8,65001\n")
    port = _free_port()
    url = f"http://127.0.0.1:{port}"
    proc = subprocess.Popen(
        [sys.executable, "-m", "prefixchain.cli", "node", "--listen", f"127.0.0.1:{port}",
         "--asn", "64999", "--key", str(key), "--genesis", str(g), "--difficulty", "1", "--mine"],
        stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL, env={**os.environ, "PYTHONUNBUFFERED": "1"},
    )
    try:
        assert wait_until_up(url, timeout=20)
        assert requests.get(url + "/identity").json()["asn"] == 64999
        upd = tmp_path / "u.txt"
        upd.write_text("100|A|10.0.0.0/8|65003 65002 65001\n101|A|10.0.0.0/8|65004 65002 65001\n")
        assert run_cli("replay", upd, "--node", url, "--format", "json") == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["transactions"] == 3 and summary["rejected"] == 0

        hijack = tmp_path / "h.txt"
        hijack.write_text("200|A|10.0.0.0/8|65005 65006\n")
        assert run_cli("replay", hijack, "--node", url, "--format", "json") == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["rejected"] >= 1 and "InvalidOrigin" in summary["reasons"]

        deadline = time.monotonic() + 20
        while len(requests.get(url + "/chain").json()["blocks"]) < 2 and time.monotonic() < deadline:
            time.sleep(0.1)
        assert len(requests.get(url + "/chain").json()["blocks"]) >= 2
    finally:
        proc.terminate()
        proc.wait(10)
