"""Network-facing edge cache with the same policy engine as in-process replay.

Endpoints:

  GET  /v1/objects/{object_id}?user={user_id}   demand access
  POST /v1/prefetch                              cache-side warm-up
  GET  /v1/stats                                 atomic counter snapshot
  POST /v1/admin/reset                           fresh state (optional new capacity)

Every cache mutation runs under one lock, so hit/miss decisions are a
function of arrival order only and match the in-process engine replaying the
same order. A simulated remote store supplies deterministic payload bytes on
misses; the cloud RTT comes from the shared delay model.
"""

from __future__ import annotations

import json
import re
import socket
import threading
import time
from dataclasses import dataclass, field
from http.client import HTTPConnection
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Sequence
from urllib.parse import urlparse

import numpy as np

from .cachesim import DelayModel, DelayModelConfig, LruCache, SweepRow, UserRow
from .trace import KIND_DEMAND, RequestTrace, validate_sorted

MODE_LOGICAL = "logical-delay"
MODE_REAL_SLEEP = "real-sleep"
MODES = (MODE_LOGICAL, MODE_REAL_SLEEP)

STATUS_FETCHED = "fetched"
STATUS_ALREADY_CACHED = "already_cached"


@dataclass(frozen=True)
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8080
    capacity: int = 64
    delays: DelayModelConfig = field(default_factory=DelayModelConfig)
    payload_bytes: int = 1024
    mode: str = MODE_LOGICAL
    catalog_size: int | None = None  # None accepts any non-negative object id

    def validate(self) -> None:
        if self.capacity < 1:
            raise ValueError("capacity must be >= 1")
        if self.payload_bytes < 0:
            raise ValueError("payload_bytes must be >= 0")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.catalog_size is not None and self.catalog_size < 1:
            raise ValueError("catalog_size must be >= 1 when set")
        self.delays.validate()


class RemoteStore:
    """Simulated central object store: payload bytes derive from the id."""

    def __init__(self, payload_bytes: int):
        self.payload_bytes = payload_bytes

    def payload(self, object_id: int) -> bytes:
        return np.random.default_rng(object_id).bytes(self.payload_bytes)


class EdgeCacheService:
    """Thread-safe cache core shared by the HTTP handler and tests."""

    def __init__(self, cfg: ServiceConfig):
        cfg.validate()
        self.cfg = cfg
        self.store = RemoteStore(cfg.payload_bytes)
        self._lock = threading.Lock()
        self._reset_state(cfg.capacity)

    def _reset_state(self, capacity: int) -> None:
        self._cache = LruCache(capacity)
        self._delays = DelayModel(self.cfg.delays)
        self._demand_requests = 0
        self._hits = 0
        self._misses = 0
        self._prefetch_fetches = 0

    def valid_object_id(self, object_id: int) -> bool:
        if object_id < 0:
            return False
        return self.cfg.catalog_size is None or object_id < self.cfg.catalog_size

    def get_object(self, object_id: int) -> tuple[bool, float]:
        """Demand access: returns (hit, delay_ms); misses admit the object."""
        with self._lock:
            hit = self._cache.access(object_id)
            self._demand_requests += 1
            if hit:
                self._hits += 1
                delay = self._delays.wireless()
            else:
                self._misses += 1
                delay = self._delays.wireless() + self._delays.cloud_rtt()
            return hit, delay

    def prefetch(self, object_ids: Sequence[int]) -> list[str]:
        """Warm the cache; returns a per-id status, in input order."""
        with self._lock:
            statuses = []
            for oid in object_ids:
                if self._cache.lookup(oid):
                    statuses.append(STATUS_ALREADY_CACHED)
                else:
                    self._cache.admit(oid)
                    self._prefetch_fetches += 1
                    statuses.append(STATUS_FETCHED)
            return statuses

    def stats(self) -> dict[str, int]:
        with self._lock:
            return {
                "demand_requests": self._demand_requests,
                "hits": self._hits,
                "misses": self._misses,
                "prefetch_fetches": self._prefetch_fetches,
                "resident_count": self._cache.resident_count(),
                "capacity": self._cache.capacity,
            }

    def reset(self, capacity: int | None = None) -> None:
        with self._lock:
            if capacity is not None and capacity < 1:
                raise ValueError("capacity must be >= 1")
            self._reset_state(capacity if capacity is not None else self._cache.capacity)


_OBJECT_PATH = re.compile(r"^/v1/objects/([^/]+)$")


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "xrflux-edge/1.0"
    # Responses are two small writes (headers, body); without TCP_NODELAY the
    # Nagle/delayed-ACK interaction stalls every request by tens of ms.
    disable_nagle_algorithm = True

    @property
    def service(self) -> EdgeCacheService:
        return self.server.service  # type: ignore[attr-defined]

    def log_message(self, format, *args):  # noqa: A002 - stdlib signature
        pass

    def _send_json(self, status: int, payload: dict) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _read_json_body(self) -> dict | None:
        length = self.headers.get("Content-Length")
        if length is None:
            return {}
        try:
            raw = self.rfile.read(int(length))
            data = json.loads(raw) if raw else {}
        except (ValueError, json.JSONDecodeError):
            return None
        return data if isinstance(data, dict) else None

    def do_GET(self):
        parsed = urlparse(self.path)
        match = _OBJECT_PATH.match(parsed.path)
        if match:
            self._handle_get_object(match.group(1), parsed.query)
            return
        if parsed.path == "/v1/stats":
            self._send_json(200, self.service.stats())
            return
        self._send_json(404, {"error": "unknown path"})

    def do_POST(self):
        parsed = urlparse(self.path)
        if parsed.path == "/v1/prefetch":
            self._handle_prefetch()
            return
        if parsed.path == "/v1/admin/reset":
            self._handle_reset()
            return
        self._send_json(404, {"error": "unknown path"})

    def _handle_get_object(self, raw_id: str, query: str) -> None:
        if not raw_id.isdigit():
            self._send_json(400, {"error": f"malformed object id {raw_id!r}"})
            return
        for part in query.split("&") if query else []:
            if part.startswith("user=") and not part[len("user="):].isdigit():
                self._send_json(400, {"error": "malformed user id"})
                return
        object_id = int(raw_id)
        service = self.service
        if not service.valid_object_id(object_id):
            self._send_json(404, {"error": f"object {object_id} not in catalog"})
            return
        hit, delay_ms = service.get_object(object_id)
        if service.cfg.mode == MODE_REAL_SLEEP:
            time.sleep(delay_ms / 1000.0)
        body = service.store.payload(object_id)
        self.send_response(200)
        self.send_header("Content-Type", "application/octet-stream")
        self.send_header("Content-Length", str(len(body)))
        self.send_header("X-Cache", "HIT" if hit else "MISS")
        self.send_header("X-Delay-Ms", repr(delay_ms))
        self.end_headers()
        self.wfile.write(body)

    def _handle_prefetch(self) -> None:
        data = self._read_json_body()
        if data is None:
            self._send_json(400, {"error": "body must be a JSON object"})
            return
        ids = data.get("object_ids")
        if not isinstance(ids, list) or not all(
            isinstance(i, int) and not isinstance(i, bool) for i in ids
        ):
            self._send_json(400, {"error": "object_ids must be a list of integers"})
            return
        service = self.service
        invalid = [i for i in ids if not service.valid_object_id(i)]
        if invalid:
            # Whole request rejected; nothing was admitted.
            self._send_json(400, {"error": f"object {invalid[0]} not in catalog"})
            return
        statuses = service.prefetch(ids)
        self._send_json(
            200,
            {"results": [{"object_id": i, "status": s} for i, s in zip(ids, statuses)]},
        )

    def _handle_reset(self) -> None:
        data = self._read_json_body()
        if data is None:
            self._send_json(400, {"error": "body must be a JSON object"})
            return
        capacity = data.get("capacity")
        if capacity is not None and (
            not isinstance(capacity, int) or isinstance(capacity, bool) or capacity < 1
        ):
            self._send_json(400, {"error": "capacity must be a positive integer"})
            return
        self.service.reset(capacity)
        self._send_json(200, {"ok": True})


def make_server(cfg: ServiceConfig) -> ThreadingHTTPServer:
    """Build the HTTP server; port 0 picks a free port (see server_address)."""
    server = ThreadingHTTPServer((cfg.host, cfg.port), _Handler)
    server.daemon_threads = True
    server.service = EdgeCacheService(cfg)  # type: ignore[attr-defined]
    return server


# --- trace replay over HTTP --------------------------------------------------


class EdgeClient:
    """Minimal keep-alive client for driving one edge service."""

    def __init__(self, endpoint: str, timeout: float = 30.0):
        parsed = urlparse(endpoint)
        if parsed.scheme != "http" or not parsed.hostname:
            raise ValueError(f"endpoint must be an http:// URL, got {endpoint!r}")
        self._conn = HTTPConnection(parsed.hostname, parsed.port or 80, timeout=timeout)
        self._conn.connect()
        self._conn.sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)

    def close(self) -> None:
        self._conn.close()

    def _request(self, method: str, path: str, body: dict | None = None):
        headers = {}
        payload = None
        if body is not None:
            payload = json.dumps(body).encode("utf-8")
            headers["Content-Type"] = "application/json"
        self._conn.request(method, path, body=payload, headers=headers)
        return self._conn.getresponse()

    def get_object(self, object_id: int, user_id: int) -> tuple[bool, float]:
        resp = self._request("GET", f"/v1/objects/{object_id}?user={user_id}")
        data = resp.read()
        if resp.status != 200:
            raise RuntimeError(f"GET object {object_id}: {resp.status} {data!r}")
        hit = resp.getheader("X-Cache") == "HIT"
        delay_ms = float(resp.getheader("X-Delay-Ms"))
        return hit, delay_ms

    def prefetch(self, object_ids: list[int], user_id: int) -> list[str]:
        resp = self._request(
            "POST", "/v1/prefetch", {"object_ids": object_ids, "user_id": user_id}
        )
        data = resp.read()
        if resp.status != 200:
            raise RuntimeError(f"POST prefetch: {resp.status} {data!r}")
        return [r["status"] for r in json.loads(data)["results"]]

    def stats(self) -> dict[str, int]:
        resp = self._request("GET", "/v1/stats")
        data = resp.read()
        if resp.status != 200:
            raise RuntimeError(f"GET stats: {resp.status} {data!r}")
        return json.loads(data)

    def reset(self, capacity: int | None = None) -> None:
        body = {} if capacity is None else {"capacity": capacity}
        resp = self._request("POST", "/v1/admin/reset", body)
        data = resp.read()
        if resp.status != 200:
            raise RuntimeError(f"POST reset: {resp.status} {data!r}")


def replay_trace_http(
    client: EdgeClient, trace: RequestTrace
) -> tuple[list[bool], list[int], list[float]]:
    """Drive one trace through the service in record order.

    Returns (demand hit flags, demand user ids, demand delays) in demand
    order, mirroring what in-process replay tallies.
    """
    validate_sorted(trace)
    hits: list[bool] = []
    uids: list[int] = []
    delays: list[float] = []
    for rec in trace.records:
        if rec.kind == KIND_DEMAND:
            hit, delay = client.get_object(rec.object_id, rec.user_id)
            hits.append(hit)
            uids.append(rec.user_id)
            delays.append(delay)
        else:
            client.prefetch([rec.object_id], rec.user_id)
    return hits, uids, delays


def sweep_http(
    endpoint: str,
    labeled_traces: Sequence[tuple[str, RequestTrace]],
    capacities: Sequence[int],
) -> list[SweepRow]:
    """Same rows as cachesim.sweep, produced against a live service."""
    if not capacities:
        raise ValueError("capacity list must be non-empty")
    client = EdgeClient(endpoint)
    try:
        rows: list[SweepRow] = []
        for cap in capacities:
            for label, tr in labeled_traces:
                client.reset(capacity=cap)
                hits, _, _ = replay_trace_http(client, tr)
                n = len(hits)
                h = sum(hits)
                rows.append(SweepRow(cap, label, n, h, h / n if n else 0.0))
        return rows
    finally:
        client.close()


def user_rows_http(
    endpoint: str,
    labeled_traces: Sequence[tuple[str, RequestTrace]],
    capacity: int,
) -> list[UserRow]:
    """Same rows as cachesim.user_rows, produced against a live service."""
    client = EdgeClient(endpoint)
    try:
        per_strategy: dict[str, dict[int, list]] = {}
        for label, tr in labeled_traces:
            client.reset(capacity=capacity)
            hits, uids, delays = replay_trace_http(client, tr)
            stats: dict[int, list] = {}
            for hit, uid, delay in zip(hits, uids, delays):
                s = stats.setdefault(uid, [0, 0, 0.0])
                s[0] += 1
                s[1] += hit
                s[2] += delay
            per_strategy[label] = stats
        all_users = sorted({uid for s in per_strategy.values() for uid in s})
        rows: list[UserRow] = []
        for uid in all_users:
            for label, _ in labeled_traces:
                s = per_strategy[label].get(uid)
                if s is None:
                    rows.append(UserRow(uid, label, 0, 0, 0.0, 0.0))
                else:
                    rows.append(UserRow(uid, label, s[0], s[1], s[1] / s[0], s[2] / s[0]))
        return rows
    finally:
        client.close()
