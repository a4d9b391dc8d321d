"""DNS wire-format encoding and decoding (RFC 1035 subset).

Parses queries and responses into a structural :class:`DnsMessage` and
serializes them back. Parsing canonicalizes: names are lowercased without
a trailing dot, and compression pointers (including those inside
name-bearing RDATA) are resolved, so ``parse(serialize(m)) == m`` holds
even though the byte encoding may differ from the input.

Only the question and answer sections are modeled. Authority records are
skipped; an OPT pseudo-record in the additional section is remembered as
the ``edns`` flag and re-emitted minimally on serialization.
"""

from __future__ import annotations

import ipaddress
import struct
from dataclasses import dataclass, field

from .domains import MAX_LABEL_LENGTH, MAX_NAME_LENGTH

__all__ = [
    "MalformedMessage",
    "Question",
    "ResourceRecord",
    "DnsMessage",
    "parse_message",
    "serialize_message",
    "encode_name",
    "make_query",
    "make_response",
    "a_record",
    "aaaa_record",
]

HEADER_LEN = 12

# Record types the engine knows by name; unknown types pass through numerically.
TYPE_A = 1
TYPE_NS = 2
TYPE_CNAME = 5
TYPE_SOA = 6
TYPE_PTR = 12
TYPE_MX = 15
TYPE_TXT = 16
TYPE_AAAA = 28
TYPE_SRV = 33
TYPE_OPT = 41
TYPE_ANY = 255

CLASS_IN = 1

RCODE_NOERROR = 0
RCODE_FORMERR = 1
RCODE_SERVFAIL = 2
RCODE_NXDOMAIN = 3

FLAG_QR = 0x8000
FLAG_AA = 0x0400
FLAG_TC = 0x0200
FLAG_RD = 0x0100
FLAG_RA = 0x0080

# Types whose RDATA embeds domain names that may use compression.
_NAME_RDATA_TYPES = {TYPE_NS, TYPE_CNAME, TYPE_PTR}


class MalformedMessage(ValueError):
    """Raised when bytes cannot be decoded as a DNS message."""


@dataclass(frozen=True)
class Question:
    qname: str
    qtype: int
    qclass: int = CLASS_IN


@dataclass(frozen=True)
class ResourceRecord:
    name: str
    rtype: int
    rclass: int
    ttl: int
    rdata: bytes


@dataclass
class DnsMessage:
    id: int
    flags: int = 0
    question: Question | None = None
    answers: list[ResourceRecord] = field(default_factory=list)
    edns: bool = False

    @property
    def qr(self) -> bool:
        return bool(self.flags & FLAG_QR)

    @property
    def opcode(self) -> int:
        return (self.flags >> 11) & 0xF

    @property
    def tc(self) -> bool:
        return bool(self.flags & FLAG_TC)

    @property
    def rd(self) -> bool:
        return bool(self.flags & FLAG_RD)

    @property
    def ra(self) -> bool:
        return bool(self.flags & FLAG_RA)

    @property
    def rcode(self) -> int:
        return self.flags & 0xF


def encode_name(name: str) -> bytes:
    """Encode a dot-separated name as uncompressed wire labels."""
    out = bytearray()
    if name:
        for label in name.split("."):
            raw = label.encode("ascii")
            if not 0 < len(raw) <= MAX_LABEL_LENGTH:
                raise ValueError(f"bad label {label!r}")
            out.append(len(raw))
            out += raw
    out.append(0)
    return bytes(out)


def _read_name(data: bytes, offset: int) -> tuple[str, int]:
    """Decode a possibly-compressed name starting at ``offset``.

    Returns the lowercase name and the offset just past its encoding at
    the original position (pointers are followed without advancing it).
    """
    labels: list[str] = []
    total = 0
    seen: set[int] = set()
    pos = offset
    end = -1  # resume position, set when the first pointer is followed
    while True:
        if pos >= len(data):
            raise MalformedMessage("name runs past end of message")
        length = data[pos]
        if length == 0:
            pos += 1
            break
        if length & 0xC0 == 0xC0:
            if pos + 1 >= len(data):
                raise MalformedMessage("truncated compression pointer")
            target = ((length & 0x3F) << 8) | data[pos + 1]
            if target in seen:
                raise MalformedMessage("compression pointer loop")
            seen.add(target)
            if end < 0:
                end = pos + 2
            pos = target
            continue
        if length & 0xC0:
            raise MalformedMessage(f"reserved label type 0x{length:02x}")
        if pos + 1 + length > len(data):
            raise MalformedMessage("truncated label")
        label = data[pos + 1 : pos + 1 + length]
        try:
            labels.append(label.decode("ascii").lower())
        except UnicodeDecodeError as exc:
            raise MalformedMessage("non-ASCII label") from exc
        total += length + 1
        if total > MAX_NAME_LENGTH + 1:
            raise MalformedMessage("name exceeds 253 octets")
        pos += 1 + length
    if end < 0:
        end = pos
    return ".".join(labels), end


def _decompress_rdata(data: bytes, rdata_start: int, rdata_len: int, rtype: int) -> bytes:
    """Rewrite name-bearing RDATA with uncompressed names.

    Keeps ``parse -> serialize`` sound when upstream answers compress
    names inside CNAME/NS/PTR/MX/SRV/SOA records. Other types are copied
    verbatim.
    """
    raw = data[rdata_start : rdata_start + rdata_len]
    if rtype in _NAME_RDATA_TYPES:
        name, _ = _read_name(data, rdata_start)
        return encode_name(name)
    if rtype == TYPE_MX:
        if rdata_len < 3:
            raise MalformedMessage("MX rdata too short")
        name, _ = _read_name(data, rdata_start + 2)
        return raw[:2] + encode_name(name)
    if rtype == TYPE_SRV:
        if rdata_len < 7:
            raise MalformedMessage("SRV rdata too short")
        name, _ = _read_name(data, rdata_start + 6)
        return raw[:6] + encode_name(name)
    if rtype == TYPE_SOA:
        mname, pos = _read_name(data, rdata_start)
        rname, pos = _read_name(data, pos)
        tail = data[pos : rdata_start + rdata_len]
        if len(tail) != 20:
            raise MalformedMessage("SOA rdata numeric tail malformed")
        return encode_name(mname) + encode_name(rname) + tail
    return raw


def _read_record(data: bytes, offset: int) -> tuple[ResourceRecord, int]:
    name, pos = _read_name(data, offset)
    if pos + 10 > len(data):
        raise MalformedMessage("truncated record header")
    rtype, rclass, ttl, rdlen = struct.unpack_from("!HHIH", data, pos)
    pos += 10
    if pos + rdlen > len(data):
        raise MalformedMessage("truncated rdata")
    rdata = _decompress_rdata(data, pos, rdlen, rtype)
    return ResourceRecord(name, rtype, rclass, ttl, rdata), pos + rdlen


def parse_message(data: bytes) -> DnsMessage:
    """Parse wire bytes into a :class:`DnsMessage`.

    Raises :class:`MalformedMessage` on truncation, label overflow,
    compression loops, or multiple questions; callers reply FORMERR or
    drop.
    """
    if len(data) < HEADER_LEN:
        raise MalformedMessage(f"message shorter than header ({len(data)} bytes)")
    msg_id, flags, qdcount, ancount, nscount, arcount = struct.unpack_from("!6H", data, 0)
    if qdcount > 1:
        raise MalformedMessage(f"unsupported question count {qdcount}")

    pos = HEADER_LEN
    question: Question | None = None
    if qdcount == 1:
        qname, pos = _read_name(data, pos)
        if pos + 4 > len(data):
            raise MalformedMessage("truncated question")
        qtype, qclass = struct.unpack_from("!HH", data, pos)
        pos += 4
        question = Question(qname, qtype, qclass)

    answers = []
    for _ in range(ancount):
        record, pos = _read_record(data, pos)
        answers.append(record)
    for _ in range(nscount):  # authority: parsed to advance, not retained
        _, pos = _read_record(data, pos)
    edns = False
    for _ in range(arcount):
        record, pos = _read_record(data, pos)
        if record.rtype == TYPE_OPT:
            edns = True
    return DnsMessage(id=msg_id, flags=flags, question=question, answers=answers, edns=edns)


def serialize_message(message: DnsMessage) -> bytes:
    """Serialize without name compression; EDNS emits a minimal OPT."""
    out = bytearray()
    qdcount = 1 if message.question else 0
    arcount = 1 if message.edns else 0
    out += struct.pack(
        "!6H", message.id & 0xFFFF, message.flags & 0xFFFF,
        qdcount, len(message.answers), 0, arcount,
    )
    if message.question:
        q = message.question
        out += encode_name(q.qname)
        out += struct.pack("!HH", q.qtype, q.qclass)
    for record in message.answers:
        out += encode_name(record.name)
        out += struct.pack("!HHIH", record.rtype, record.rclass, record.ttl & 0xFFFFFFFF, len(record.rdata))
        out += record.rdata
    if message.edns:
        # Root name, type OPT, requestor payload size in the class field.
        out += b"\x00" + struct.pack("!HHIH", TYPE_OPT, 4096, 0, 0)
    return bytes(out)


def make_query(query_id: int, qname: str, qtype: int, *, rd: bool = True) -> DnsMessage:
    flags = FLAG_RD if rd else 0
    return DnsMessage(id=query_id, flags=flags, question=Question(qname, qtype))


def make_response(
    query: DnsMessage,
    *,
    rcode: int = RCODE_NOERROR,
    answers: list[ResourceRecord] | None = None,
    ra: bool = True,
) -> DnsMessage:
    """Build a response mirroring the query's id, opcode, RD, and question."""
    flags = FLAG_QR | (query.flags & (0xF << 11)) | (query.flags & FLAG_RD) | (rcode & 0xF)
    if ra:
        flags |= FLAG_RA
    return DnsMessage(
        id=query.id,
        flags=flags,
        question=query.question,
        answers=list(answers or []),
        edns=query.edns,
    )


def a_record(name: str, address: str, ttl: int) -> ResourceRecord:
    return ResourceRecord(name, TYPE_A, CLASS_IN, ttl, ipaddress.IPv4Address(address).packed)


def aaaa_record(name: str, address: str, ttl: int) -> ResourceRecord:
    return ResourceRecord(name, TYPE_AAAA, CLASS_IN, ttl, ipaddress.IPv6Address(address).packed)
