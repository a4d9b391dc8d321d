from __future__ import annotations

import json
import random
import threading
from datetime import datetime, timedelta, timezone

import pytest
from hypothesis import given, settings, strategies as st

from llmsink.blocklist import (
    BlocklistStore,
    EntrySource,
    InvalidWindow,
    ListParseError,
)
from llmsink.domains import InvalidDomain

T0 = datetime(2025, 3, 1, 8, 0, tzinfo=timezone.utc)
HOUR = timedelta(hours=1)


def make_store(**kwargs) -> BlocklistStore:
    return BlocklistStore(path=None, clock=lambda: T0, **kwargs)


# -- canonicalization and entry invariants -----------------------------------


def test_add_entry_canonicalizes():
    store = make_store()
    entry = store.add_entry("ChatGPT.com", "AI-sinkhole", source=EntrySource.CLASSIFIER, verdict_id="v42")
    assert entry.domain == "chatgpt.com"
    assert entry.tag == "AI-sinkhole"
    assert entry.verdict_id == "v42"


def test_add_entry_rejects_garbage():
    store = make_store()
    with pytest.raises(InvalidDomain):
        store.add_entry("not a domain!", "AI-sinkhole")


def test_verdict_id_only_with_classifier_source():
    store = make_store()
    with pytest.raises(ValueError):
        store.add_entry("a.example", "t", source=EntrySource.MANUAL, verdict_id="v1")
    with pytest.raises(ValueError):
        store.add_entry("a.example", "t", source=EntrySource.CLASSIFIER)


def test_add_entry_idempotent_on_domain_tag():
    store = make_store()
    first = store.add_entry("poe.com", "AI-sinkhole", window=(T0, T0 + 4 * HOUR))
    second = store.add_entry("poe.com", "AI-sinkhole", window=(T0, T0 + 8 * HOUR))
    assert len(store.entries()) == 1
    assert second.added_at == first.added_at
    assert second.active_window == (T0, T0 + 8 * HOUR)


def test_windowed_entry_active_only_inside_window():
    store = make_store()
    store.add_entry("poe.com", "AI-sinkhole", window=(T0, T0 + 4 * HOUR))
    assert store.is_blocked("poe.com", T0) is not None
    assert store.is_blocked("poe.com", T0 + 4 * HOUR - timedelta(seconds=1)) is not None
    assert store.is_blocked("poe.com", T0 + 4 * HOUR) is None  # half-open end
    assert store.is_blocked("poe.com", T0 - timedelta(seconds=1)) is None


# -- matching oracle -----------------------------------------------------------


def oracle_match(qname: str, blocked: list[str], whitelisted: list[str]) -> str | None:
    """Linear-scan label-suffix reference for is_blocked."""

    def suffix_match(name: str, entry: str) -> bool:
        return name == entry or name.endswith("." + entry)

    if any(suffix_match(qname, w) for w in whitelisted):
        return None
    hits = [b for b in blocked if suffix_match(qname, b)]
    if not hits:
        return None
    return max(hits, key=len)  # longest (most specific) rule governs


def _random_domain(rng: random.Random) -> str:
    tlds = ["com", "org", "net", "io", "ai", "co.uk", "edu.cn"]
    labels = ["chat", "gpt", "ai", "edu", "example", "news", "shop", "api", "app", "ml"]
    depth = rng.randint(1, 3)
    host = ".".join(rng.choice(labels) + str(rng.randint(0, 99)) for _ in range(depth))
    return f"{host}.{rng.choice(tlds)}"


def test_is_blocked_agrees_with_bruteforce_oracle():
    rng = random.Random(42)
    blocked = sorted({_random_domain(rng) for _ in range(160)})
    whitelisted = sorted({rng.choice(blocked) for _ in range(12)})
    store = make_store()
    for domain in blocked:
        store.add_entry(domain, "AI-sinkhole")
    for domain in whitelisted:
        store.whitelist_override(domain)

    queries = set()
    while len(queries) < 500:
        base = rng.choice(blocked) if rng.random() < 0.6 else _random_domain(rng)
        if rng.random() < 0.5:
            base = f"sub{rng.randint(0, 9)}.{base}"
        queries.add(base)

    for qname in sorted(queries):
        expected = oracle_match(qname, blocked, whitelisted)
        got = store.is_blocked(qname, T0)
        assert (got.domain if got else None) == expected, qname


def test_label_boundary_not_substring():
    store = make_store()
    store.add_entry("chatgpt.com", "AI-sinkhole")
    assert store.is_blocked("gpt.example.org", T0) is None
    assert store.is_blocked("notchatgpt.com", T0) is None
    assert store.is_blocked("chat.chatgpt.com", T0) is not None


def test_longest_suffix_wins():
    store = make_store()
    store.add_entry("example.com", "broad")
    store.add_entry("ai.example.com", "narrow")
    hit = store.is_blocked("x.ai.example.com", T0)
    assert hit is not None and hit.domain == "ai.example.com"


# -- whitelist ----------------------------------------------------------------


def test_whitelist_beats_blocklist_and_covers_subdomains():
    store = make_store()
    store.add_entry("you.com", "AI-sinkhole")
    store.whitelist_override("you.com")
    assert store.is_blocked("you.com", T0) is None
    store.add_entry("edu.example", "AI-sinkhole")
    store.whitelist_override("edu.example")
    assert store.is_blocked("sub.edu.example", T0) is None


def test_remove_whitelist_resumes_blocking():
    store = make_store()
    store.add_entry("you.com", "AI-sinkhole")
    store.whitelist_override("you.com")
    assert store.is_blocked("you.com", T0) is None
    assert store.remove_whitelist("you.com")
    assert store.is_blocked("you.com", T0) is not None


# -- tag windows and sweeps -----------------------------------------------------


def _store_with_63() -> BlocklistStore:
    store = make_store()
    for i in range(63):
        store.add_entry(f"site{i:02d}.example", "AI-sinkhole")
    return store


def test_set_tag_window_counts_and_applies():
    store = _store_with_63()
    window = (T0, T0 + 4 * HOUR)
    assert store.set_tag_window("AI-sinkhole", window) == 63
    assert store.is_blocked("site00.example", T0 + HOUR) is not None
    assert store.is_blocked("site00.example", T0 + 5 * HOUR) is None
    assert store.set_tag_window("no-such-tag", window) == 0
    with pytest.raises(InvalidWindow):
        store.set_tag_window("AI-sinkhole", (T0 + HOUR, T0))


def test_null_window_disables_tag():
    store = _store_with_63()
    store.set_tag_window("AI-sinkhole", (T0, T0 + 4 * HOUR))
    assert store.is_blocked("site01.example", T0 + HOUR) is not None
    store.set_tag_window("AI-sinkhole", None)
    assert store.is_blocked("site01.example", T0 + HOUR) is None
    # Entries are retained and can be re-enabled.
    assert store.set_tag_window("AI-sinkhole", (T0, T0 + 8 * HOUR)) == 63
    assert store.is_blocked("site01.example", T0 + HOUR) is not None


def test_expire_sweep_counts_and_is_idempotent():
    store = _store_with_63()
    end = T0 + 4 * HOUR
    store.set_tag_window("AI-sinkhole", (T0, end))
    assert store.expire_sweep(end + timedelta(seconds=1)) == 63
    assert store.expire_sweep(end + timedelta(seconds=1)) == 0
    assert store.is_blocked("site00.example", T0 + HOUR) is None  # deactivated


def test_expire_sweep_noop_without_windows():
    store = make_store()
    store.add_entry("always.example", "t")
    assert store.expire_sweep(T0 + 100 * HOUR) == 0
    assert store.is_blocked("always.example", T0 + 100 * HOUR) is not None


# -- randomized window property --------------------------------------------------


@settings(max_examples=200)
@given(
    start_offset=st.integers(-10_000, 10_000),
    duration=st.integers(1, 50_000),
    probe_offset=st.integers(-20_000, 70_000),
)
def test_window_property_hypothesis(start_offset, duration, probe_offset):
    start = T0 + timedelta(seconds=start_offset)
    end = start + timedelta(seconds=duration)
    store = make_store()
    store.add_entry("windowed.example", "t", window=(start, end))
    probe = T0 + timedelta(seconds=probe_offset)
    hit = store.is_blocked("windowed.example", probe)
    assert (hit is not None) == (start <= probe < end)


# -- export / import -------------------------------------------------------------


def test_export_format_and_round_trip():
    store = _store_with_63()
    doc = store.export_list("AI-sinkhole", now=T0)
    lines = doc.splitlines()
    assert lines[0] == "# tag: AI-sinkhole"
    assert lines[1] == f"# generated: {T0.isoformat()}"
    assert lines[2] == "# entries: 63"
    domains = lines[3:]
    assert domains == sorted(domains) and len(domains) == 63
    assert doc.endswith("\n")

    other = make_store()
    added, deactivated = other.import_list(doc, "AI-sinkhole")
    assert (added, deactivated) == (63, 0)
    assert other.export_list("AI-sinkhole", now=T0) == doc  # byte-identical


def test_import_is_authoritative_for_its_tag():
    store = _store_with_63()
    doc = store.export_list("AI-sinkhole", now=T0)
    body = doc.splitlines()[3:]
    changed = ["brandnew.example"] + body[1:]  # drop one, add one
    document = "\n".join(changed) + "\n"
    added, deactivated = store.import_list(document, "AI-sinkhole")
    assert (added, deactivated) == (1, 1)
    active = [e for e in store.entries("AI-sinkhole") if e.active]
    assert len(active) == 63
    assert store.is_blocked("brandnew.example", T0) is not None
    assert store.is_blocked(body[0], T0) is None


def test_import_of_own_export_is_noop():
    store = _store_with_63()
    before = store.export_list("AI-sinkhole", now=T0)
    assert store.import_list(before, "AI-sinkhole") == (0, 0)
    assert store.export_list("AI-sinkhole", now=T0) == before


def test_import_parse_error_aborts_without_partial_apply():
    store = make_store()
    store.add_entry("keep.example", "AI-sinkhole")
    document = "good.example\nhttp://bad entry\nanother.example\n"
    with pytest.raises(ListParseError) as excinfo:
        store.import_list(document, "AI-sinkhole")
    assert excinfo.value.line_number == 2
    # Nothing from the document was applied.
    assert [e.domain for e in store.entries("AI-sinkhole")] == ["keep.example"]
    assert store.is_blocked("good.example", T0) is None


# -- persistence and concurrency ---------------------------------------------------


def test_store_persists_and_reloads(tmp_path):
    path = tmp_path / "store.jsonl"
    store = BlocklistStore(path, clock=lambda: T0)
    store.add_entry("chatgpt.com", "AI-sinkhole", window=(T0, T0 + 4 * HOUR),
                    source=EntrySource.CLASSIFIER, verdict_id="v1")
    store.whitelist_override("you.com", reason="false positive")

    with open(path) as fh:
        rows = [json.loads(line) for line in fh]
    assert {"domain", "tag", "added_at", "active_window", "source", "verdict_id", "active"} <= set(rows[0])
    assert rows[0]["added_at"] == T0.isoformat()

    reloaded = BlocklistStore(path, clock=lambda: T0)
    assert reloaded.entries() == store.entries()
    assert reloaded.whitelist_entries() == store.whitelist_entries()


def test_snapshot_is_atomic_under_concurrent_writes():
    store = _store_with_63()
    w1 = (T0, T0 + 4 * HOUR)
    w2 = (T0 + 8 * HOUR, T0 + 12 * HOUR)
    stop = threading.Event()
    torn: list[str] = []

    def writer():
        flip = False
        while not stop.is_set():
            store.set_tag_window("AI-sinkhole", w1 if flip else w2)
            flip = not flip

    def reader():
        while not stop.is_set():
            snap = store.snapshot
            windows = {e.active_window for e in snap.active_entries(T0 + HOUR)}
            windows |= {e.active_window for e in snap.active_entries(T0 + 9 * HOUR)}
            if len(windows) > 1:
                torn.append(str(windows))

    threads = [threading.Thread(target=writer)] + [threading.Thread(target=reader) for _ in range(3)]
    for t in threads:
        t.start()
    import time

    time.sleep(0.5)
    stop.set()
    for t in threads:
        t.join()
    assert torn == []
