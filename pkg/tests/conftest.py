from __future__ import annotations

import socket
import socketserver
import struct
import threading
from pathlib import Path

import pytest

from llmsink.dnswire import (
    FLAG_TC,
    TYPE_A,
    a_record,
    make_response,
    parse_message,
    serialize_message,
)

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"
PAGES = Path(__file__).resolve().parent / "fixtures" / "pages"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def dataset_path() -> Path:
    return FIXTURES / "dataset.csv"


class FakeUpstreamServer:
    """Real UDP+TCP upstream on localhost answering from a fixed zone.

    Names listed in ``truncate_for`` get a TC=1 empty UDP answer so the
    client has to retry over TCP.
    """

    def __init__(self, zone: dict[str, str], truncate_for: set[str] | None = None):
        self.zone = dict(zone)
        self.truncate_for = truncate_for or set()
        self.udp_queries: list[str] = []
        self.tcp_queries: list[str] = []

        outer = self

        class UdpHandler(socketserver.BaseRequestHandler):
            def handle(self):
                data, sock = self.request
                query = parse_message(data)
                assert query.question is not None
                qname = query.question.qname
                outer.udp_queries.append(qname)
                if qname in outer.truncate_for:
                    reply = make_response(query)
                    reply.flags |= FLAG_TC
                    sock.sendto(serialize_message(reply), self.client_address)
                    return
                sock.sendto(outer._answer(query), self.client_address)

        class TcpHandler(socketserver.BaseRequestHandler):
            def handle(self):
                header = self.request.recv(2)
                (length,) = struct.unpack("!H", header)
                data = b""
                while len(data) < length:
                    data += self.request.recv(length - len(data))
                query = parse_message(data)
                assert query.question is not None
                outer.tcp_queries.append(query.question.qname)
                wire = outer._answer(query)
                self.request.sendall(struct.pack("!H", len(wire)) + wire)

        self._udp = socketserver.UDPServer(("127.0.0.1", 0), UdpHandler)
        port = self._udp.server_address[1]
        self._tcp = socketserver.TCPServer(("127.0.0.1", port), TcpHandler)
        self._threads = [
            threading.Thread(target=self._udp.serve_forever, daemon=True),
            threading.Thread(target=self._tcp.serve_forever, daemon=True),
        ]

    def _answer(self, query) -> bytes:
        qname = query.question.qname
        answers = []
        if query.question.qtype == TYPE_A and qname in self.zone:
            answers = [a_record(qname, self.zone[qname], 60)]
        return serialize_message(make_response(query, answers=answers))

    @property
    def host(self) -> str:
        return "127.0.0.1"

    @property
    def port(self) -> int:
        return self._udp.server_address[1]

    def __enter__(self) -> "FakeUpstreamServer":
        for thread in self._threads:
            thread.start()
        return self

    def __exit__(self, *exc) -> None:
        for server in (self._udp, self._tcp):
            server.shutdown()
            server.server_close()


def udp_query(host: str, port: int, wire: bytes, timeout: float = 2.0) -> bytes:
    with socket.socket(socket.AF_INET, socket.SOCK_DGRAM) as sock:
        sock.settimeout(timeout)
        sock.sendto(wire, (host, port))
        data, _ = sock.recvfrom(4096)
    return data
