"""HTTP front end for a :class:`~prefixchain.node.Node` and the matching client transport."""

from __future__ import annotations

import json
import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any

import requests

from .encoding import canonical_encode
from .node import Node
from .overlay import DEFAULT_KEEPALIVE_INTERVAL, Unreachable

log = logging.getLogger(__name__)

MAX_BODY = 64 * 1024 * 1024


class HttpTransport:
    """Blocking JSON-over-HTTP client; ``send`` runs on a small worker pool."""

    def __init__(self, timeout: float = 5.0, attempts: int = 2, workers: int = 8):
        self.timeout = timeout
        self.attempts = attempts
        self.session = requests.Session()
        self.pool = ThreadPoolExecutor(max_workers=workers, thread_name_prefix="send")

    def request(self, address: str, port: int, method: str, path: str, body: Any = None) -> tuple[int, Any]:
        url = f"http://{address}:{port}{path}"
        data = canonical_encode(body) if body is not None else None
        try:
            r = self.session.request(
                method, url, data=data, timeout=self.timeout, headers={"Content-Type": "application/json"}
            )
        except requests.RequestException as exc:
            raise Unreachable(str(exc)) from exc
        try:
            return r.status_code, r.json() if r.content else None
        except ValueError as exc:
            raise Unreachable(f"non-JSON reply from {url}") from exc

    def _send(self, address: str, port: int, path: str, body: Any) -> None:
        for attempt in range(self.attempts):
            try:
                self.request(address, port, "POST", path, body)
                return
            except Unreachable as exc:
                log.debug("send to %s:%d%s failed (attempt %d): %s", address, port, path, attempt + 1, exc)

    def send(self, address: str, port: int, path: str, body: Any) -> None:
        self.pool.submit(self._send, address, port, path, body)

    def close(self) -> None:
        self.pool.shutdown(wait=False)
        self.session.close()


def _handler_for(node: Node) -> type[BaseHTTPRequestHandler]:
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def _reply(self, status: int, payload: Any) -> None:
            data = canonical_encode(payload) if payload is not None else b""
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def _dispatch(self, method: str) -> None:
            body = None
            length = int(self.headers.get("Content-Length") or 0)
            if length > MAX_BODY:
                self._reply(413, {"error": "body too large"})
                return
            if length:
                try:
                    body = json.loads(self.rfile.read(length))
                except ValueError:
                    self._reply(400, {"error": "body is not JSON"})
                    return
            try:
                status, payload = node.handle(method, self.path, body)
            except Exception:  # noqa: BLE001 - keep serving
                log.exception("handler failed for %s %s", method, self.path)
                status, payload = 500, {"error": "internal error"}
            self._reply(status, payload)

        def do_GET(self):
            self._dispatch("GET")

        def do_POST(self):
            self._dispatch("POST")

        def log_message(self, fmt, *args):
            log.debug("%s %s", self.address_string(), fmt % args)

    return Handler


class NodeServer:
    """Runs the HTTP listener plus the miner, keep-alive and auto-revoke loops."""

    def __init__(
        self,
        node: Node,
        host: str,
        port: int,
        mine: bool = False,
        auto_revoke: bool = False,
        keepalive_interval: float = DEFAULT_KEEPALIVE_INTERVAL,
        idle_wait: float = 0.5,
    ):
        self.node = node
        self.httpd = ThreadingHTTPServer((host, port), _handler_for(node))
        self.httpd.daemon_threads = True
        self.mine = mine
        self.auto_revoke = auto_revoke
        self.keepalive_interval = keepalive_interval
        self.idle_wait = idle_wait
        self.stopping = threading.Event()
        self.threads: list[threading.Thread] = []

    @property
    def port(self) -> int:
        return self.httpd.server_address[1]

    def _miner_loop(self) -> None:
        while not self.stopping.is_set():
            if self.auto_revoke:
                self.node.auto_revoke()
            if self.mine and self.node.mine_block() is not None:
                block = self.node.chain.head
                log.info("mined block %d %s (%d txs)", block.index, block.hash[:16], len(block.transactions))
                continue
            self.stopping.wait(self.idle_wait)

    def _keepalive_loop(self) -> None:
        while not self.stopping.wait(self.keepalive_interval):
            try:
                self.node.keepalive_sweep()
                self.node.gossip_round()
            except Exception:  # noqa: BLE001
                log.exception("keep-alive sweep failed")

    def start(self) -> NodeServer:
        for target, name in (
            (self.httpd.serve_forever, "http"),
            (self._miner_loop, "miner"),
            (self._keepalive_loop, "keepalive"),
        ):
            t = threading.Thread(target=target, name=name, daemon=True)
            t.start()
            self.threads.append(t)
        return self

    def stop(self) -> None:
        self.stopping.set()
        self.node.abort.set()
        self.httpd.shutdown()
        self.httpd.server_close()

    def serve_forever(self) -> None:
        self.start()
        try:
            while not self.stopping.wait(1.0):
                pass
        except KeyboardInterrupt:
            pass
        finally:
            self.stop()


def wait_until_up(url: str, timeout: float = 10.0) -> bool:
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        try:
            if requests.get(url + "/identity", timeout=1).ok:
                return True
        except requests.RequestException:
            pass
        time.sleep(0.05)
    return False
