"""Forwarding DNS resolver that sinkholes blocklisted names.

Resolution order: whitelist/blocklist match (sinkhole), then answer
cache, then upstream. Blocked names never reach the upstream and are
never cached as blocks, so a window closing takes effect on the next
query. Sinkhole answers are 0.0.0.0 / ``::`` (NODATA for other types)
with a short TTL so client caches drain quickly after deactivation.
"""

from __future__ import annotations

import hashlib
import socket
import socketserver
import struct
import threading
from collections import OrderedDict, deque
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import Callable

from . import dnswire
from .blocklist import BlocklistStore, utcnow
from .dnswire import (
    DnsMessage,
    MalformedMessage,
    a_record,
    aaaa_record,
    make_response,
    parse_message,
    serialize_message,
)

__all__ = [
    "Outcome",
    "ResolutionDecision",
    "QueryLogRecord",
    "QueryLog",
    "UpstreamError",
    "UpstreamTimeout",
    "TruncatedWithoutTcp",
    "UdpUpstream",
    "ScriptedUpstream",
    "SinkholeResolver",
    "DnsServers",
]

SINKHOLE_V4 = "0.0.0.0"
SINKHOLE_V6 = "::"
CACHE_TTL_CAP_SECS = 300


class Outcome(str, Enum):
    SINKHOLED = "sinkholed"
    FORWARDED = "forwarded"
    CACHE_HIT = "cache_hit"
    SERVFAIL = "servfail"


@dataclass(frozen=True)
class ResolutionDecision:
    outcome: Outcome
    upstream_used: str | None = None
    matched_entry: str | None = None

    def __post_init__(self):
        if (self.matched_entry is not None) != (self.outcome == Outcome.SINKHOLED):
            raise ValueError("matched_entry is present exactly for sinkholed outcomes")


@dataclass(frozen=True)
class QueryLogRecord:
    timestamp: datetime
    client: str
    qname: str
    qtype: int
    decision: ResolutionDecision


class QueryLog:
    """Bounded in-memory ring of query records, single-writer appended.

    Client addresses are stored only as salted one-way hashes; the raw
    address never enters the log.
    """

    def __init__(self, capacity: int = 10000, salt: str = "llmsink"):
        self._records: deque[QueryLogRecord] = deque(maxlen=capacity)
        self._salt = salt
        self._lock = threading.Lock()

    def anonymize(self, client_address: str) -> str:
        digest = hashlib.sha256(f"{self._salt}|{client_address}".encode()).hexdigest()
        return digest[:16]

    def append(self, record: QueryLogRecord) -> None:
        with self._lock:
            self._records.append(record)

    def records(
        self, since: datetime | None = None, limit: int | None = None
    ) -> list[QueryLogRecord]:
        """Newest-first; ``since`` keeps records strictly after that instant."""
        with self._lock:
            rows = list(self._records)
        rows.reverse()
        if since is not None:
            rows = [r for r in rows if r.timestamp > since]
        if limit is not None:
            rows = rows[:limit]
        return rows

    def __len__(self) -> int:
        with self._lock:
            return len(self._records)

    def persist(self, path: Path | str) -> None:
        import json

        with open(path, "w", encoding="utf-8") as handle:
            for record in self.records():
                handle.write(json.dumps(query_record_to_json(record), sort_keys=True) + "\n")


def query_record_to_json(record: QueryLogRecord) -> dict:
    return {
        "timestamp": record.timestamp.isoformat(),
        "client": record.client,
        "qname": record.qname,
        "qtype": record.qtype,
        "outcome": record.decision.outcome.value,
        "upstream_used": record.decision.upstream_used,
        "matched_entry": record.decision.matched_entry,
    }


class UpstreamError(Exception):
    pass


class UpstreamTimeout(UpstreamError):
    pass


class TruncatedWithoutTcp(UpstreamError):
    pass


class UdpUpstream:
    """Queries one upstream over UDP, retrying over TCP on truncation."""

    def __init__(self, host: str, port: int = 53, timeout: float = 2.0, retries: int = 1):
        self.host = host
        self.port = port
        self.timeout = timeout
        self.retries = retries

    @property
    def address(self) -> str:
        return f"{self.host}:{self.port}"

    def __call__(self, wire: bytes) -> bytes:
        for _ in range(self.retries + 1):
            with socket.socket(socket.AF_INET, socket.SOCK_DGRAM) as sock:
                sock.settimeout(self.timeout)
                try:
                    sock.sendto(wire, (self.host, self.port))
                    data, _ = sock.recvfrom(4096)
                except socket.timeout:
                    continue
            if data[:2] != wire[:2]:
                continue  # stray datagram; transaction id must echo
            if len(data) >= 4 and data[2] & (dnswire.FLAG_TC >> 8):
                return self._query_tcp(wire)
            return data
        raise UpstreamTimeout(f"no answer from {self.address} after {self.retries + 1} tries")

    def _query_tcp(self, wire: bytes) -> bytes:
        try:
            with socket.create_connection((self.host, self.port), timeout=self.timeout) as sock:
                sock.sendall(struct.pack("!H", len(wire)) + wire)
                header = _recv_exact(sock, 2)
                (length,) = struct.unpack("!H", header)
                return _recv_exact(sock, length)
        except OSError as exc:
            raise TruncatedWithoutTcp(f"TCP retry to {self.address} failed: {exc}") from exc


def _recv_exact(sock: socket.socket, count: int) -> bytes:
    chunks = b""
    while len(chunks) < count:
        part = sock.recv(count - len(chunks))
        if not part:
            raise OSError("connection closed mid-message")
        chunks += part
    return chunks


class ScriptedUpstream:
    """In-process fake upstream answering from a fixed zone (tests, trials)."""

    def __init__(self, zone: dict[str, str] | None = None, default_address: str = "192.0.2.1", ttl: int = 60):
        self.zone = zone or {}
        self.default_address = default_address
        self.ttl = ttl
        self.queries: list[str] = []
        self.address = "scripted"

    def __call__(self, wire: bytes) -> bytes:
        query = parse_message(wire)
        assert query.question is not None
        qname = query.question.qname
        self.queries.append(qname)
        answers = []
        if query.question.qtype == dnswire.TYPE_A:
            answers = [a_record(qname, self.zone.get(qname, self.default_address), self.ttl)]
        return serialize_message(make_response(query, answers=answers))


class _Cache:
    """LRU answer cache keyed by (qname, qtype), storing wire bytes."""

    def __init__(self, max_entries: int = 4096):
        self.max_entries = max_entries
        self._rows: OrderedDict[tuple[str, int], tuple[float, bytes]] = OrderedDict()
        self._lock = threading.Lock()

    def get(self, key: tuple[str, int], now: datetime) -> bytes | None:
        with self._lock:
            row = self._rows.get(key)
            if row is None:
                return None
            expires, wire = row
            if now.timestamp() >= expires:
                del self._rows[key]
                return None
            self._rows.move_to_end(key)
            return wire

    def put(self, key: tuple[str, int], wire: bytes, ttl: int, now: datetime) -> None:
        if ttl <= 0 or self.max_entries <= 0:
            return
        with self._lock:
            self._rows[key] = (now.timestamp() + ttl, wire)
            self._rows.move_to_end(key)
            while len(self._rows) > self.max_entries:
                self._rows.popitem(last=False)


@dataclass
class _Counters:
    total: int = 0
    blocked: int = 0
    lock: threading.Lock = field(default_factory=threading.Lock)


class SinkholeResolver:
    """Resolves queries against the block store, cache, and upstream."""

    def __init__(
        self,
        store: BlocklistStore,
        upstream: Callable[[bytes], bytes],
        *,
        sinkhole_ttl: int = 2,
        cache_max_entries: int = 4096,
        query_log: QueryLog | None = None,
        clock: Callable[[], datetime] = utcnow,
    ):
        self.store = store
        self.upstream = upstream
        self.sinkhole_ttl = sinkhole_ttl
        self.query_log = query_log if query_log is not None else QueryLog()
        self.clock = clock
        self._cache = _Cache(cache_max_entries)
        self._counters = _Counters()

    @property
    def queries_total(self) -> int:
        with self._counters.lock:
            return self._counters.total

    @property
    def queries_blocked(self) -> int:
        with self._counters.lock:
            return self._counters.blocked

    def sinkhole_response(self, query: DnsMessage) -> DnsMessage:
        """Non-routable answer for A/AAAA; NODATA for every other type."""
        assert query.question is not None
        q = query.question
        answers = []
        if q.qtype == dnswire.TYPE_A:
            answers = [a_record(q.qname, SINKHOLE_V4, self.sinkhole_ttl)]
        elif q.qtype == dnswire.TYPE_AAAA:
            answers = [aaaa_record(q.qname, SINKHOLE_V6, self.sinkhole_ttl)]
        return make_response(query, answers=answers)

    def resolve(
        self,
        query: DnsMessage,
        now: datetime | None = None,
        client: str = "local",
    ) -> tuple[DnsMessage, ResolutionDecision]:
        _, message, decision = self._resolve(query, raw_query=None, now=now, client=client)
        return message, decision

    def resolve_wire(self, wire: bytes, client: str) -> bytes | None:
        """Server entry point: bytes in, bytes out (None drops the packet)."""
        try:
            query = parse_message(wire)
        except MalformedMessage:
            return _formerr_reply(wire)
        if query.qr:
            return None  # not a query; drop
        if query.question is None:
            return _formerr_reply(wire)
        answer, _, _ = self._resolve(query, raw_query=wire, now=None, client=client)
        return answer

    def _resolve(
        self,
        query: DnsMessage,
        raw_query: bytes | None,
        now: datetime | None,
        client: str,
    ) -> tuple[bytes, DnsMessage, ResolutionDecision]:
        if query.question is None:
            raise ValueError("query must carry exactly one question")
        now = now or self.clock()
        q = query.question
        qname = q.qname

        entry = self.store.is_blocked(qname, now)
        if entry is not None:
            message = self.sinkhole_response(query)
            decision = ResolutionDecision(Outcome.SINKHOLED, matched_entry=entry.entry_id)
            return self._finish(query, serialize_message(message), message, decision, now, client)

        key = (qname, q.qtype)
        cached = self._cache.get(key, now)
        if cached is not None:
            wire = struct.pack("!H", query.id) + cached[2:]
            message = parse_message(wire)
            decision = ResolutionDecision(Outcome.CACHE_HIT)
            return self._finish(query, wire, message, decision, now, client)

        upstream_name = getattr(self.upstream, "address", "upstream")
        try:
            answer_wire = self.upstream(raw_query or serialize_message(query))
        except UpstreamError:
            message = make_response(query, rcode=dnswire.RCODE_SERVFAIL)
            decision = ResolutionDecision(Outcome.SERVFAIL)
            return self._finish(query, serialize_message(message), message, decision, now, client)

        # Relay verbatim aside from the transaction id, which must be the
        # client's (we forward the client's id, so normally a no-op).
        answer_wire = struct.pack("!H", query.id) + answer_wire[2:]
        try:
            message = parse_message(answer_wire)
        except MalformedMessage:
            message = make_response(query, rcode=dnswire.RCODE_SERVFAIL)
            decision = ResolutionDecision(Outcome.SERVFAIL)
            return self._finish(query, serialize_message(message), message, decision, now, client)

        if message.rcode == dnswire.RCODE_NOERROR and message.answers:
            ttl = min(min(a.ttl for a in message.answers), CACHE_TTL_CAP_SECS)
            self._cache.put(key, answer_wire, ttl, now)
        decision = ResolutionDecision(Outcome.FORWARDED, upstream_used=upstream_name)
        return self._finish(query, answer_wire, message, decision, now, client)

    def _finish(
        self,
        query: DnsMessage,
        wire: bytes,
        message: DnsMessage,
        decision: ResolutionDecision,
        now: datetime,
        client: str,
    ) -> tuple[bytes, DnsMessage, ResolutionDecision]:
        with self._counters.lock:
            self._counters.total += 1
            if decision.outcome == Outcome.SINKHOLED:
                self._counters.blocked += 1
        # Logging is best-effort and never blocks resolution.
        assert query.question is not None
        self.query_log.append(
            QueryLogRecord(
                timestamp=now,
                client=self.query_log.anonymize(client),
                qname=query.question.qname,
                qtype=query.question.qtype,
                decision=decision,
            )
        )
        return wire, message, decision


def _formerr_reply(wire: bytes) -> bytes | None:
    if len(wire) < 2:
        return None
    flags = dnswire.FLAG_QR | dnswire.RCODE_FORMERR
    return wire[:2] + struct.pack("!5H", flags, 0, 0, 0, 0)


class _UdpHandler(socketserver.BaseRequestHandler):
    def handle(self):
        data, sock = self.request
        reply = self.server.resolver.resolve_wire(data, client=self.client_address[0])
        if reply is not None:
            sock.sendto(reply, self.client_address)


class _TcpHandler(socketserver.BaseRequestHandler):
    def handle(self):
        try:
            header = _recv_exact(self.request, 2)
            (length,) = struct.unpack("!H", header)
            data = _recv_exact(self.request, length)
        except OSError:
            return
        reply = self.server.resolver.resolve_wire(data, client=self.client_address[0])
        if reply is not None:
            self.request.sendall(struct.pack("!H", len(reply)) + reply)


class _UdpServer(socketserver.ThreadingUDPServer):
    allow_reuse_address = True
    daemon_threads = True


class _TcpServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True


class DnsServers:
    """UDP and TCP listeners sharing one resolver."""

    def __init__(self, resolver: SinkholeResolver, host: str = "127.0.0.1", port: int = 5353):
        self.udp = _UdpServer((host, port), _UdpHandler)
        self.udp.resolver = resolver
        # Bind TCP to whatever port UDP actually got (port=0 support in tests).
        bound_port = self.udp.server_address[1]
        self.tcp = _TcpServer((host, bound_port), _TcpHandler)
        self.tcp.resolver = resolver
        self._threads: list[threading.Thread] = []

    @property
    def port(self) -> int:
        return self.udp.server_address[1]

    def start(self) -> None:
        for server in (self.udp, self.tcp):
            thread = threading.Thread(target=server.serve_forever, daemon=True)
            thread.start()
            self._threads.append(thread)

    def stop(self) -> None:
        for server in (self.udp, self.tcp):
            server.shutdown()
            server.server_close()
