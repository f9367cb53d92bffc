"""Deterministic local WMTS stand-in for offline tests.

Serves procedurally generated tiles for any URL whose path ends in
``/{matrix}/{row}/{col}.jpg`` (or ``.png``); the prefix is free-form so any
url_template works against it.  The same URL always returns byte-identical
image data (seeded per coordinate).  Failures and latency are injectable via
the config, and ``/stats`` exposes request and concurrency counters so tests
can observe crawl parallelism.

Config (JSON file or dict): ``{"seed": int, "failures": [{"row": int,
"col": int, "status": int, "times": int?}], "latency_ms": number,
"tile_size": int}``.  A failure without ``times`` applies forever.
"""

from __future__ import annotations

import hashlib
import io
import json
import re
import threading
import time
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
from PIL import Image

_TILE_PATH = re.compile(r"/(\d+)/(\d+)/(\d+)\.(jpg|jpeg|png)$")


@dataclass
class MockServerConfig:
    seed: int = 0
    failures: list[dict] = field(default_factory=list)
    latency_ms: float = 0.0
    tile_size: int = 256

    @classmethod
    def from_json(cls, d: dict) -> "MockServerConfig":
        return cls(
            seed=int(d.get("seed", 0)),
            failures=list(d.get("failures", [])),
            latency_ms=float(d.get("latency_ms", 0.0)),
            tile_size=int(d.get("tile_size", 256)),
        )

    @classmethod
    def from_file(cls, path) -> "MockServerConfig":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def render_tile(seed: int, path: str, tile_size: int) -> np.ndarray:
    """Procedural RGB tile, a pure function of (seed, request path)."""
    digest = hashlib.sha256(f"{seed}:{path}".encode()).digest()
    rng = np.random.Generator(np.random.PCG64(int.from_bytes(digest[:8], "little")))
    arr = np.empty((tile_size, tile_size, 3), dtype=np.uint8)
    arr[:, :] = rng.integers(0, 256, size=3, dtype=np.uint8)
    for _ in range(5):
        x0, y0 = rng.integers(0, tile_size, size=2)
        w, h = rng.integers(tile_size // 8, tile_size // 2, size=2)
        arr[y0 : y0 + h, x0 : x0 + w] = rng.integers(0, 256, size=3, dtype=np.uint8)
    return arr


class MockTileServer:
    """Threaded HTTP server; use as a context manager in tests."""

    def __init__(self, config: MockServerConfig | None = None, host: str = "127.0.0.1", port: int = 0):
        self.config = config or MockServerConfig()
        self._lock = threading.Lock()
        self._tile_cache: dict[str, bytes] = {}
        self._failures: dict[tuple[int, int], dict] = {}
        for f in self.config.failures:
            self._failures[(int(f["row"]), int(f["col"]))] = {
                "status": int(f.get("status", 500)),
                "times": f.get("times"),  # None = always
            }
        self.stats = {"requests": 0, "in_flight": 0, "max_in_flight": 0}
        server = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def do_GET(self):
                server._handle(self)

        # Bind eagerly so an occupied explicit port fails at startup.
        self._httpd = ThreadingHTTPServer((host, port), Handler)
        self._httpd.daemon_threads = True
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)

    @property
    def port(self) -> int:
        return self._httpd.server_address[1]

    @property
    def base_url(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}"

    @property
    def url_template(self) -> str:
        return self.base_url + "/wmts/{layer}/default/{date}/{matrix}/{row}/{col}.jpg"

    def start(self) -> "MockTileServer":
        self._thread.start()
        return self

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()

    # -- request handling --------------------------------------------------

    def _handle(self, handler: BaseHTTPRequestHandler) -> None:
        # /stats reports tile traffic; it must not perturb the counters itself
        if handler.path == "/stats":
            with self._lock:
                body = json.dumps(self.stats).encode()
            self._respond(handler, 200, body, "application/json")
            return
        with self._lock:
            self.stats["requests"] += 1
            self.stats["in_flight"] += 1
            self.stats["max_in_flight"] = max(self.stats["max_in_flight"], self.stats["in_flight"])
        try:
            if self.config.latency_ms:
                time.sleep(self.config.latency_ms / 1000.0)
            m = _TILE_PATH.search(handler.path)
            if not m:
                self._respond(handler, 404, b"not a tile path", "text/plain")
                return
            _, row, col, ext = m.groups()
            status = self._failure_status(int(row), int(col))
            if status is not None:
                self._respond(handler, status, f"injected {status}".encode(), "text/plain")
                return
            body = self._tile_bytes(handler.path, ext)
            self._respond(handler, 200, body, "image/png" if ext == "png" else "image/jpeg")
        finally:
            with self._lock:
                self.stats["in_flight"] -= 1

    def _failure_status(self, row: int, col: int) -> int | None:
        with self._lock:
            rule = self._failures.get((row, col))
            if rule is None:
                return None
            if rule["times"] is None:
                return rule["status"]
            if rule["times"] > 0:
                rule["times"] -= 1
                return rule["status"]
            return None

    def _tile_bytes(self, path: str, ext: str) -> bytes:
        with self._lock:
            cached = self._tile_cache.get(path)
        if cached is not None:
            return cached
        arr = render_tile(self.config.seed, path, self.config.tile_size)
        img = Image.fromarray(arr, "RGB")
        buf = io.BytesIO()
        if ext == "png":
            img.save(buf, format="PNG")
        else:
            img.save(buf, format="JPEG", quality=85)
        body = buf.getvalue()
        with self._lock:
            self._tile_cache[path] = body
        return body

    @staticmethod
    def _respond(handler: BaseHTTPRequestHandler, status: int, body: bytes, ctype: str) -> None:
        handler.send_response(status)
        handler.send_header("Content-Type", ctype)
        handler.send_header("Content-Length", str(len(body)))
        handler.send_header("Access-Control-Allow-Origin", "*")
        handler.end_headers()
        handler.wfile.write(body)


def mock_tile_server(config: MockServerConfig | dict | None = None, port: int = 0) -> MockTileServer:
    """Start a mock tile endpoint; caller is responsible for ``stop()``."""
    if isinstance(config, dict):
        config = MockServerConfig.from_json(config)
    return MockTileServer(config, port=port).start()


def main(argv=None) -> int:
    """Run the mock endpoint standalone: ``python3 -m tilesift.mockserver``."""
    import argparse

    parser = argparse.ArgumentParser(description="Deterministic local tile endpoint for development.")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=9123)
    parser.add_argument("--config", help="JSON config: seed, failures, latency_ms, tile_size")
    ns = parser.parse_args(argv)
    config = MockServerConfig.from_file(ns.config) if ns.config else None
    server = MockTileServer(config, host=ns.host, port=ns.port).start()
    print(f"serving tiles at {server.base_url}", flush=True)
    print(f"url template:    {server.url_template}", flush=True)
    print(f"stats:           {server.base_url}/stats", flush=True)
    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        server.stop()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
