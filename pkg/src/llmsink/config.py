"""Service configuration, loadable from a TOML file."""

from __future__ import annotations

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from dataclasses import dataclass, field
from pathlib import Path

__all__ = ["AppConfig", "load_config", "DEFAULT_TAG"]

DEFAULT_TAG = "AI-sinkhole"


@dataclass
class DnsConfig:
    listen: str = "127.0.0.1:5353"
    upstream: str = "1.1.1.1:53"
    sinkhole_ttl_secs: int = 2
    cache_max_entries: int = 4096
    upstream_timeout_ms: int = 2000


@dataclass
class CrawlConfig:
    timeout_ms: int = 10000
    max_bytes: int = 1_000_000
    content_cap: int = 4000
    rate_per_host: float = 0.5  # requests per second per host
    user_agent: str = "llmsink-crawler/0.1"


@dataclass
class DiscoveryConfig:
    min_query_count: int = 3
    seed_lists: list[str] = field(default_factory=list)


@dataclass
class LlmConfig:
    endpoint: str = "http://127.0.0.1:11434"
    model: str = "llama3:8b"
    temperature: float = 0.0
    max_retries: int = 2
    timeout_ms: int = 60000
    criteria_file: str | None = None
    chat_path: str = "/v1/chat/completions"


@dataclass
class PolicyConfig:
    auto_block_on_yes: bool = True


@dataclass
class ApiConfig:
    listen: str = "127.0.0.1:8053"
    token: str = "change-me"
    dashboard_dir: str | None = None
    max_page_size: int = 500
    cors_origin: str | None = None


@dataclass
class AppConfig:
    dns: DnsConfig = field(default_factory=DnsConfig)
    crawl: CrawlConfig = field(default_factory=CrawlConfig)
    discovery: DiscoveryConfig = field(default_factory=DiscoveryConfig)
    llm: LlmConfig = field(default_factory=LlmConfig)
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    api: ApiConfig = field(default_factory=ApiConfig)
    store_path: str = "llmsink-store.jsonl"
    query_log_path: str = "llmsink-queries.jsonl"
    verdict_log_path: str = "llmsink-verdicts.jsonl"
    tag: str = DEFAULT_TAG


def _apply(section: object, values: dict) -> None:
    for key, value in values.items():
        if hasattr(section, key):
            setattr(section, key, value)
        else:
            raise KeyError(f"unknown config key {key!r} for {type(section).__name__}")


def load_config(path: Path | str | None = None) -> AppConfig:
    config = AppConfig()
    if path is None:
        return config
    with open(path, "rb") as handle:
        raw = tomllib.load(handle)
    for name in ("dns", "crawl", "discovery", "llm", "policy", "api"):
        if name in raw:
            _apply(getattr(config, name), raw[name])
    for name in ("store_path", "query_log_path", "verdict_log_path", "tag"):
        if name in raw:
            setattr(config, name, raw[name])
    return config


def split_listen(listen: str, default_port: int) -> tuple[str, int]:
    if ":" in listen:
        host, _, port = listen.rpartition(":")
        return host, int(port)
    return listen, default_port
