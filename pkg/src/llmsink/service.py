"""Shared runtime state wiring the stores, resolver, and verdict records."""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .blocklist import BlocklistStore, EntrySource
from .classifier import Verdict, VerdictValue, append_verdict_log, load_verdict_log
from .config import AppConfig, split_listen
from .resolver import QueryLog, SinkholeResolver, UdpUpstream

__all__ = ["ServiceState", "VerdictStore", "build_state", "apply_verdicts"]


class VerdictStore:
    """In-memory verdict list mirrored to a JSON-lines file."""

    def __init__(self, path: Path | str | None = None):
        self._path = Path(path) if path else None
        self._rows: list[Verdict] = []
        self._lock = threading.Lock()
        if self._path and self._path.exists():
            self._rows = load_verdict_log(self._path)

    def add(self, verdicts: list[Verdict]) -> None:
        with self._lock:
            self._rows.extend(verdicts)
            if self._path:
                append_verdict_log(self._path, verdicts)

    def all(self) -> list[Verdict]:
        with self._lock:
            return list(self._rows)


@dataclass
class ServiceState:
    config: AppConfig
    store: BlocklistStore
    query_log: QueryLog
    resolver: SinkholeResolver
    verdicts: VerdictStore
    started_at: datetime = field(default_factory=lambda: datetime.now(timezone.utc))

    def state_hash(self) -> str:
        """Digest of all mutable state; read endpoints must not change it."""
        payload = {
            "entries": [
                {
                    "domain": e.domain,
                    "tag": e.tag,
                    "active": e.active,
                    "window": [w.isoformat() for w in e.active_window] if e.active_window else None,
                }
                for e in self.store.entries()
            ],
            "whitelist": [w.domain for w in self.store.whitelist_entries()],
            "verdicts": [v.verdict_id for v in self.verdicts.all()],
            "counters": [self.resolver.queries_total, self.resolver.queries_blocked],
            "log_len": len(self.query_log),
        }
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


def build_state(config: AppConfig) -> ServiceState:
    store = BlocklistStore(config.store_path)
    query_log = QueryLog()
    upstream_host, upstream_port = split_listen(config.dns.upstream, 53)
    upstream = UdpUpstream(
        upstream_host, upstream_port, timeout=config.dns.upstream_timeout_ms / 1000.0
    )
    resolver = SinkholeResolver(
        store,
        upstream,
        sinkhole_ttl=config.dns.sinkhole_ttl_secs,
        cache_max_entries=config.dns.cache_max_entries,
        query_log=query_log,
    )
    verdicts = VerdictStore(config.verdict_log_path)
    return ServiceState(
        config=config, store=store, query_log=query_log, resolver=resolver, verdicts=verdicts
    )


def apply_verdicts(
    state: ServiceState, verdicts: list[Verdict], *, auto_block: bool | None = None
) -> int:
    """Policy step between classification and the block store.

    Only ``yes`` verdicts are ever applied, and only when auto-blocking
    is on; ``unknown`` never blocks. Returns the number of entries added.
    """
    if auto_block is None:
        auto_block = state.config.policy.auto_block_on_yes
    state.verdicts.add(verdicts)
    if not auto_block:
        return 0
    added = 0
    for verdict in verdicts:
        if verdict.verdict != VerdictValue.YES:
            continue
        state.store.add_entry(
            verdict.dossier_url,
            state.config.tag,
            window=state.store.tag_window(state.config.tag),
            source=EntrySource.CLASSIFIER,
            verdict_id=verdict.verdict_id,
        )
        added += 1
    return added
