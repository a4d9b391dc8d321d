"""Persistent block/whitelist store with windows and subscription export.

Single-writer, many-reader: every mutation happens under one lock,
rebuilds an immutable :class:`Snapshot`, and swaps it in atomically.
Resolver workers only ever touch snapshots, so a query sees either the
pre-update or the post-update list, never a mix.

Entries are deactivated rather than deleted when their window ends or a
subscription drops them, which keeps the set available for re-enabling
and for audit.
"""

from __future__ import annotations

import dataclasses
import json
import os
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable

from .domains import InvalidDomain, canonicalize_domain

__all__ = [
    "EntrySource",
    "BlockEntry",
    "WhitelistEntry",
    "InvalidWindow",
    "ListParseError",
    "BlocklistStore",
    "Snapshot",
]

Window = tuple[datetime, datetime]


def utcnow() -> datetime:
    return datetime.now(timezone.utc)


class EntrySource(str, Enum):
    MANUAL = "manual"
    CLASSIFIER = "classifier"
    SUBSCRIPTION = "subscription"


class InvalidWindow(ValueError):
    """Raised when a window has start >= end."""


class ListParseError(ValueError):
    def __init__(self, line_number: int, line: str, reason: str):
        super().__init__(f"line {line_number}: {reason}: {line!r}")
        self.line_number = line_number
        self.line = line


@dataclass(frozen=True)
class BlockEntry:
    domain: str
    tag: str
    added_at: datetime
    active_window: Window | None
    source: EntrySource
    verdict_id: str | None
    active: bool = True

    @property
    def entry_id(self) -> str:
        return f"{self.tag}:{self.domain}"

    def blocks_at(self, now: datetime) -> bool:
        """Enforceable at ``now``: active flag set and window (if any) open."""
        if not self.active:
            return False
        if self.active_window is None:
            return True
        start, end = self.active_window
        return start <= now < end  # half-open [start, end)


@dataclass(frozen=True)
class WhitelistEntry:
    domain: str
    reason: str
    created_at: datetime


class Snapshot:
    """Immutable view used by resolver workers."""

    def __init__(
        self,
        entries: dict[str, tuple[BlockEntry, ...]],
        whitelist: frozenset[str],
    ):
        self._entries = entries
        self._whitelist = whitelist

    @staticmethod
    def _suffixes(qname: str) -> Iterable[str]:
        labels = qname.split(".")
        for i in range(len(labels)):
            yield ".".join(labels[i:])

    def match(self, qname: str, now: datetime) -> BlockEntry | None:
        """Longest-suffix match on label boundaries; whitelist always wins."""
        for suffix in self._suffixes(qname):
            if suffix in self._whitelist:
                return None
        for suffix in self._suffixes(qname):
            bucket = self._entries.get(suffix)
            if not bucket:
                continue
            for entry in bucket:
                if entry.blocks_at(now):
                    return entry
        return None

    def active_entries(self, now: datetime, tag: str | None = None) -> list[BlockEntry]:
        found = []
        for bucket in self._entries.values():
            for entry in bucket:
                if entry.blocks_at(now) and (tag is None or entry.tag == tag):
                    found.append(entry)
        return found

    def active_count(self, now: datetime) -> int:
        return len(self.active_entries(now))


class BlocklistStore:
    """Stores tagged block entries and whitelist overrides.

    ``path`` is a JSON-lines file, one entry object per line; ``None``
    keeps the store in memory (tests, trials).
    """

    def __init__(self, path: Path | str | None = None, clock: Callable[[], datetime] = utcnow):
        self._path = Path(path) if path else None
        self._clock = clock
        self._lock = threading.Lock()
        self._entries: dict[tuple[str, str], BlockEntry] = {}
        self._whitelist: dict[str, WhitelistEntry] = {}
        self._tag_windows: dict[str, Window | None] = {}
        if self._path and self._path.exists():
            self._load()
        self._snapshot = self._build_snapshot()

    # -- snapshot handling ------------------------------------------------

    @property
    def snapshot(self) -> Snapshot:
        return self._snapshot

    def _build_snapshot(self) -> Snapshot:
        by_domain: dict[str, list[BlockEntry]] = {}
        for entry in self._entries.values():
            by_domain.setdefault(entry.domain, []).append(entry)
        frozen = {
            domain: tuple(sorted(bucket, key=lambda e: e.tag))
            for domain, bucket in by_domain.items()
        }
        return Snapshot(frozen, frozenset(self._whitelist))

    def _commit(self) -> None:
        # Called with the lock held: persist first, then swap the snapshot.
        if self._path:
            self._persist()
        self._snapshot = self._build_snapshot()

    # -- queries -----------------------------------------------------------

    def is_blocked(self, qname: str, now: datetime | None = None) -> BlockEntry | None:
        return self._snapshot.match(qname, now or self._clock())

    def entries(self, tag: str | None = None) -> list[BlockEntry]:
        with self._lock:
            rows = list(self._entries.values())
        if tag is not None:
            rows = [e for e in rows if e.tag == tag]
        return sorted(rows, key=lambda e: (e.tag, e.domain))

    def whitelist_entries(self) -> list[WhitelistEntry]:
        with self._lock:
            return sorted(self._whitelist.values(), key=lambda e: e.domain)

    def tag_window(self, tag: str) -> Window | None:
        with self._lock:
            return self._tag_windows.get(tag)

    # -- mutations ---------------------------------------------------------

    def add_entry(
        self,
        domain: str,
        tag: str,
        window: Window | None = None,
        source: EntrySource = EntrySource.MANUAL,
        verdict_id: str | None = None,
    ) -> BlockEntry:
        """Upsert an entry; re-adding a (domain, tag) pair updates it in place."""
        name = canonicalize_domain(domain)
        _check_window(window)
        if (verdict_id is not None) != (source == EntrySource.CLASSIFIER):
            raise ValueError("verdict_id is set exactly when source is classifier")
        with self._lock:
            key = (name, tag)
            existing = self._entries.get(key)
            entry = BlockEntry(
                domain=name,
                tag=tag,
                added_at=existing.added_at if existing else self._clock(),
                active_window=window,
                source=source,
                verdict_id=verdict_id,
                active=True,
            )
            self._entries[key] = entry
            self._commit()
            return entry

    def set_tag_window(self, tag: str, window: Window | None) -> int:
        """Apply ``window`` to every entry carrying ``tag``.

        ``None`` disables the tag indefinitely (entries deactivated but
        retained); a window re-activates them for its span. Returns the
        number of entries affected.
        """
        _check_window(window)
        with self._lock:
            self._tag_windows[tag] = window
            count = 0
            for key, entry in list(self._entries.items()):
                if entry.tag != tag:
                    continue
                self._entries[key] = dataclasses.replace(
                    entry, active_window=window, active=window is not None
                )
                count += 1
            if count:
                self._commit()
            return count

    def expire_sweep(self, now: datetime | None = None) -> int:
        """Deactivate entries whose window has ended; idempotent per instant."""
        now = now or self._clock()
        with self._lock:
            count = 0
            for key, entry in list(self._entries.items()):
                if entry.active and entry.active_window and entry.active_window[1] <= now:
                    self._entries[key] = dataclasses.replace(entry, active=False)
                    count += 1
            if count:
                self._commit()
            return count

    def whitelist_override(self, domain: str, reason: str = "") -> WhitelistEntry:
        name = canonicalize_domain(domain)
        with self._lock:
            entry = WhitelistEntry(domain=name, reason=reason, created_at=self._clock())
            self._whitelist[name] = entry
            self._commit()
            return entry

    def remove_whitelist(self, domain: str) -> bool:
        name = canonicalize_domain(domain)
        with self._lock:
            removed = self._whitelist.pop(name, None) is not None
            if removed:
                self._commit()
            return removed

    # -- subscription format -------------------------------------------------

    def export_list(self, tag: str, now: datetime | None = None) -> str:
        """Render the subscription document for ``tag``.

        One bare domain per line, LF endings, sorted; the header carries
        tag, generation timestamp, and entry count. Only entries
        enforceable at ``now`` are included.
        """
        now = now or self._clock()
        domains = sorted(e.domain for e in self._snapshot.active_entries(now, tag))
        lines = [
            f"# tag: {tag}",
            f"# generated: {now.isoformat()}",
            f"# entries: {len(domains)}",
            *domains,
        ]
        return "\n".join(lines) + "\n"

    def import_list(
        self,
        text: str,
        tag: str,
        source: EntrySource = EntrySource.SUBSCRIPTION,
        now: datetime | None = None,
    ) -> tuple[int, int]:
        """Apply a subscription document as the authoritative set for ``tag``.

        Returns ``(added, deactivated)``. The whole document is validated
        before anything is applied; a malformed line aborts the import.
        """
        incoming: list[str] = []
        for line_number, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            try:
                incoming.append(canonicalize_domain(line))
            except InvalidDomain as exc:
                raise ListParseError(line_number, raw, str(exc)) from exc

        with self._lock:
            wanted = set(incoming)
            present = {
                entry.domain for entry in self._entries.values() if entry.tag == tag
            }
            added = 0
            deactivated = 0
            window = self._tag_windows.get(tag)
            for domain in sorted(wanted):
                key = (domain, tag)
                existing = self._entries.get(key)
                if existing is None:
                    self._entries[key] = BlockEntry(
                        domain=domain,
                        tag=tag,
                        added_at=now or self._clock(),
                        active_window=window,
                        source=source,
                        verdict_id=None,
                        active=True,
                    )
                    added += 1
                elif not existing.active:
                    self._entries[key] = dataclasses.replace(existing, active=True)
            for domain in sorted(present - wanted):
                key = (domain, tag)
                entry = self._entries[key]
                if entry.active:
                    self._entries[key] = dataclasses.replace(entry, active=False)
                    deactivated += 1
            self._commit()
            return added, deactivated

    # -- persistence ---------------------------------------------------------

    def _persist(self) -> None:
        assert self._path is not None
        tmp = self._path.with_suffix(self._path.suffix + ".tmp")
        with open(tmp, "w", encoding="utf-8") as handle:
            for entry in sorted(self._entries.values(), key=lambda e: (e.tag, e.domain)):
                handle.write(json.dumps(_entry_to_json(entry), sort_keys=True) + "\n")
            for wl in sorted(self._whitelist.values(), key=lambda e: e.domain):
                handle.write(json.dumps(_whitelist_to_json(wl), sort_keys=True) + "\n")
        os.replace(tmp, self._path)

    def _load(self) -> None:
        assert self._path is not None
        with open(self._path, encoding="utf-8") as handle:
            for raw in handle:
                raw = raw.strip()
                if not raw:
                    continue
                row = json.loads(raw)
                if "tag" in row:
                    entry = _entry_from_json(row)
                    self._entries[(entry.domain, entry.tag)] = entry
                else:
                    wl = _whitelist_from_json(row)
                    self._whitelist[wl.domain] = wl


def _check_window(window: Window | None) -> None:
    if window is not None and window[0] >= window[1]:
        raise InvalidWindow(f"window start {window[0]} is not before end {window[1]}")


def _entry_to_json(entry: BlockEntry) -> dict:
    return {
        "domain": entry.domain,
        "tag": entry.tag,
        "added_at": entry.added_at.isoformat(),
        "active_window": (
            {"start": entry.active_window[0].isoformat(), "end": entry.active_window[1].isoformat()}
            if entry.active_window
            else None
        ),
        "source": entry.source.value,
        "verdict_id": entry.verdict_id,
        "active": entry.active,
    }


def _entry_from_json(row: dict) -> BlockEntry:
    window = None
    if row.get("active_window"):
        window = (
            datetime.fromisoformat(row["active_window"]["start"]),
            datetime.fromisoformat(row["active_window"]["end"]),
        )
    return BlockEntry(
        domain=row["domain"],
        tag=row["tag"],
        added_at=datetime.fromisoformat(row["added_at"]),
        active_window=window,
        source=EntrySource(row["source"]),
        verdict_id=row.get("verdict_id"),
        active=bool(row.get("active", True)),
    )


def _whitelist_to_json(entry: WhitelistEntry) -> dict:
    return {
        "domain": entry.domain,
        "reason": entry.reason,
        "created_at": entry.created_at.isoformat(),
    }


def _whitelist_from_json(row: dict) -> WhitelistEntry:
    return WhitelistEntry(
        domain=row["domain"],
        reason=row.get("reason", ""),
        created_at=datetime.fromisoformat(row["created_at"]),
    )
