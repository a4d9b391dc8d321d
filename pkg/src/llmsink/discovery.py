"""Candidate discovery and website dossier construction.

A dossier bundles the three classifier inputs for one site: the URL,
the head metadata (title, description, keywords), and a markdown-ish
content summary. Fetch failures still yield a dossier with the failure
recorded, because a bare URL is often enough evidence on its own.
"""

from __future__ import annotations

import json
import re
import threading
import time
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from html.parser import HTMLParser
from pathlib import Path
from typing import Iterable

import httpx

from .blocklist import BlocklistStore
from .domains import InvalidDomain, canonicalize_domain, registrable_domain
from .resolver import QueryLogRecord

__all__ = [
    "FetchStatus",
    "FetchLimits",
    "WebsiteDossier",
    "CandidateDomain",
    "extract_metadata",
    "html_to_summary",
    "fetch_dossier",
    "mine_query_log",
    "load_seed_list",
    "save_dossier",
    "load_dossier",
    "load_archive",
    "HostRateLimiter",
]


class FetchStatus:
    OK = "ok"
    BLOCKED = "blocked"
    TIMED_OUT = "timed_out"
    HTTP_ERROR = "http_error"


@dataclass(frozen=True)
class FetchLimits:
    timeout: float = 10.0
    max_bytes: int = 1_000_000
    content_cap: int = 4000


@dataclass(frozen=True)
class WebsiteDossier:
    url: str
    title: str
    description: str
    keywords: str
    content: str
    fetched_at: datetime
    fetch_status: str
    http_status: int | None = None

    def to_json(self) -> dict:
        return {
            "url": self.url,
            "metadata": {
                "title": self.title,
                "description": self.description,
                "keywords": self.keywords,
            },
            "content": self.content,
            "fetched_at": self.fetched_at.isoformat(),
            "fetch_status": self.fetch_status,
            "http_status": self.http_status,
        }

    @classmethod
    def from_json(cls, row: dict) -> "WebsiteDossier":
        meta = row.get("metadata", {})
        return cls(
            url=row["url"],
            title=meta.get("title", ""),
            description=meta.get("description", ""),
            keywords=meta.get("keywords", ""),
            content=row.get("content", ""),
            fetched_at=datetime.fromisoformat(row["fetched_at"]),
            fetch_status=row["fetch_status"],
            http_status=row.get("http_status"),
        )


@dataclass(frozen=True)
class CandidateDomain:
    domain: str
    first_seen: datetime
    query_count: int
    origin: str  # "seed_list" | "query_log"


def _collapse_ws(text: str) -> str:
    return re.sub(r"\s+", " ", text).strip()


class _HeadParser(HTMLParser):
    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.title_parts: list[str] = []
        self.metas: list[tuple[str, str]] = []
        self._in_title = False

    def handle_starttag(self, tag, attrs):
        if tag == "title":
            self._in_title = True
        elif tag == "meta":
            attr = dict(attrs)
            key = (attr.get("name") or attr.get("property") or "").strip().lower()
            content = attr.get("content") or ""
            if key:
                self.metas.append((key, content))

    def handle_endtag(self, tag):
        if tag == "title":
            self._in_title = False

    def handle_data(self, data):
        if self._in_title:
            self.title_parts.append(data)


def extract_metadata(html_text: str) -> tuple[str, str, str]:
    """Pull (title, description, keywords) out of a page head.

    ``meta name=`` wins over OpenGraph ``property=`` when both are
    present; missing fields come back as empty strings. Tolerates
    malformed markup.
    """
    parser = _HeadParser()
    try:
        parser.feed(html_text)
        parser.close()
    except Exception:
        pass  # keep whatever was parsed before the markup broke
    title = "".join(parser.title_parts)
    # Title is RCDATA: an unclosed <title> swallows the rest of the page,
    # and a literal "<" cannot appear in well-formed title text.
    title = _collapse_ws(title.split("<", 1)[0])
    # HTMLParser already unescapes attribute values and (with
    # convert_charrefs) text data, so no extra entity decoding here.
    metas = dict(reversed(parser.metas))  # first occurrence of a key wins
    description = metas.get("description") or metas.get("og:description") or ""
    keywords = metas.get("keywords") or ""
    return title, _collapse_ws(description), _collapse_ws(keywords)


_SKIP_TAGS = {"script", "style", "noscript", "template", "svg", "iframe", "head"}
_BOILERPLATE_TAGS = {"nav", "header", "footer", "aside"}
_HEADINGS = {"h1": 1, "h2": 2, "h3": 3, "h4": 4, "h5": 5, "h6": 6}
_BLOCK_BREAKS = {"p", "div", "section", "article", "tr", "table", "blockquote", "pre"}


class _SummaryParser(HTMLParser):
    """Flattens a page into markdown-ish blocks, skipping boilerplate."""

    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.blocks: list[str] = []
        self._current: list[str] = []
        self._skip_depth = 0
        self._prefix = ""

    def _flush(self):
        text = _collapse_ws("".join(self._current))
        if text:
            self.blocks.append(self._prefix + text)
        self._current = []
        self._prefix = ""

    def handle_starttag(self, tag, attrs):
        if tag in _SKIP_TAGS or tag in _BOILERPLATE_TAGS:
            self._skip_depth += 1
            return
        if self._skip_depth:
            return
        if tag in _HEADINGS:
            self._flush()
            self._prefix = "#" * _HEADINGS[tag] + " "
        elif tag == "li":
            self._flush()
            self._prefix = "- "
        elif tag in _BLOCK_BREAKS or tag == "br":
            self._flush()

    def handle_endtag(self, tag):
        if tag in _SKIP_TAGS or tag in _BOILERPLATE_TAGS:
            self._skip_depth = max(0, self._skip_depth - 1)
            return
        if self._skip_depth:
            return
        if tag in _HEADINGS or tag == "li" or tag in _BLOCK_BREAKS:
            self._flush()

    def handle_data(self, data):
        if not self._skip_depth:
            self._current.append(data)


def html_to_summary(html_text: str, cap: int) -> str:
    """Reduce a page to plain markdown-ish text of at most ``cap`` chars.

    Scripts, styles, and nav/header/footer boilerplate are dropped;
    headings map to ``#`` levels, list items to ``- ``, and links keep
    their anchor text only. Truncation lands on a word boundary.
    """
    if cap <= 0:
        raise ValueError("cap must be positive")
    parser = _SummaryParser()
    try:
        parser.feed(html_text)
        parser.close()
    except Exception:
        pass
    parser._flush()
    text = "\n\n".join(parser.blocks)
    if len(text) <= cap:
        return text
    cut = text[:cap]
    # Back up to the last whole word unless the text is one giant token.
    trimmed = re.sub(r"\S+$", "", cut).rstrip()
    return trimmed if trimmed else cut


def fetch_dossier(
    url: str,
    limits: FetchLimits = FetchLimits(),
    *,
    client: httpx.Client | None = None,
    user_agent: str = "llmsink-crawler/0.1",
    rate_limiter: "HostRateLimiter | None" = None,
) -> WebsiteDossier:
    """Fetch ``url`` and build its dossier; never raises.

    Failures come back as a dossier with ``fetch_status`` set and empty
    metadata/content so the classifier can still reason from the URL.
    """
    if not re.match(r"^https?://", url, re.IGNORECASE):
        raise ValueError(f"URL must be http(s): {url!r}")
    fetched_at = datetime.now(timezone.utc)
    base = WebsiteDossier(
        url=url, title="", description="", keywords="", content="",
        fetched_at=fetched_at, fetch_status=FetchStatus.BLOCKED,
    )
    if rate_limiter is not None:
        rate_limiter.wait(url)
    own_client = client is None
    if own_client:
        client = httpx.Client(
            timeout=limits.timeout,
            headers={"User-Agent": user_agent},
            follow_redirects=True,
        )
    try:
        with client.stream("GET", url) as response:
            if response.status_code != 200:
                return replace(
                    base, fetch_status=FetchStatus.HTTP_ERROR, http_status=response.status_code
                )
            body = b""
            for chunk in response.iter_bytes():
                body += chunk
                if len(body) >= limits.max_bytes:
                    body = body[: limits.max_bytes]
                    break
        text = body.decode(response.encoding or "utf-8", errors="replace")
    except httpx.TimeoutException:
        return replace(base, fetch_status=FetchStatus.TIMED_OUT)
    except httpx.HTTPError:
        return replace(base, fetch_status=FetchStatus.BLOCKED)
    finally:
        if own_client:
            client.close()

    title, description, keywords = extract_metadata(text)
    content = html_to_summary(text, limits.content_cap)
    return replace(
        base,
        title=title,
        description=description,
        keywords=keywords,
        content=content,
        fetch_status=FetchStatus.OK,
        http_status=200,
    )


class HostRateLimiter:
    """Serializes fetches per host with a minimum interval between them."""

    def __init__(self, min_interval: float = 2.0):
        self.min_interval = min_interval
        self._last: dict[str, float] = {}
        self._lock = threading.Lock()

    def wait(self, url: str) -> None:
        host = re.sub(r"^https?://", "", url, flags=re.IGNORECASE).split("/", 1)[0].lower()
        while True:
            with self._lock:
                now = time.monotonic()
                last = self._last.get(host, 0.0)
                delay = self.min_interval - (now - last)
                if delay <= 0:
                    self._last[host] = now
                    return
            time.sleep(min(delay, 0.1))


def mine_query_log(
    records: Iterable[QueryLogRecord],
    known: set[str],
    min_count: int,
    *,
    store: BlocklistStore | None = None,
    now: datetime | None = None,
) -> list[CandidateDomain]:
    """Extract unclassified registrable domains queried at least ``min_count`` times.

    Subdomains collapse to their registrable domain; domains already in
    ``known`` or matching the active blocklist are skipped. Sorted by
    descending query count, then name.
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    known_bases = set()
    for item in known:
        try:
            known_bases.add(registrable_domain(canonicalize_domain(item)))
        except InvalidDomain:
            continue
    counts: dict[str, int] = {}
    first_seen: dict[str, datetime] = {}
    for record in records:
        try:
            base = registrable_domain(canonicalize_domain(record.qname))
        except InvalidDomain:
            continue
        counts[base] = counts.get(base, 0) + 1
        if base not in first_seen or record.timestamp < first_seen[base]:
            first_seen[base] = record.timestamp
    out = []
    check_time = now or datetime.now(timezone.utc)
    for base, count in counts.items():
        if count < min_count or base in known_bases:
            continue
        if store is not None and store.is_blocked(base, check_time) is not None:
            continue
        out.append(
            CandidateDomain(domain=base, first_seen=first_seen[base], query_count=count, origin="query_log")
        )
    out.sort(key=lambda c: (-c.query_count, c.domain))
    return out


def load_seed_list(text: str) -> list[str]:
    """One URL per line; blank lines and ``#`` comments are skipped."""
    urls = []
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            urls.append(line)
    return urls


def _archive_filename(url: str) -> str:
    host = re.sub(r"^https?://", "", url, flags=re.IGNORECASE).split("/", 1)[0].lower()
    safe = re.sub(r"[^a-z0-9.-]", "_", host)
    return f"{safe}.json"


def save_dossier(directory: Path | str, dossier: WebsiteDossier) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / _archive_filename(dossier.url)
    path.write_text(json.dumps(dossier.to_json(), sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return path


def load_dossier(path: Path | str) -> WebsiteDossier:
    return WebsiteDossier.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def load_archive(directory: Path | str) -> list[WebsiteDossier]:
    directory = Path(directory)
    return [load_dossier(p) for p in sorted(directory.glob("*.json"))]
