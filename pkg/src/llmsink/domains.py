"""Domain name canonicalization and suffix matching.

Every domain that enters the block store, the whitelist, or the resolver
goes through :func:`canonicalize_domain` first, so matching elsewhere can
assume lowercase ASCII names without scheme, port, path, or trailing dot.
"""

from __future__ import annotations

import re
from functools import lru_cache
from importlib import resources

__all__ = [
    "InvalidDomain",
    "canonicalize_domain",
    "domain_matches",
    "registrable_domain",
]

MAX_NAME_LENGTH = 253
MAX_LABEL_LENGTH = 63

_LABEL_RE = re.compile(r"^[a-z0-9_]([a-z0-9_-]*[a-z0-9_])?$")
_SCHEME_RE = re.compile(r"^[a-z][a-z0-9+.-]*://", re.IGNORECASE)


class InvalidDomain(ValueError):
    """Raised when a string cannot be canonicalized into a domain name."""


def canonicalize_domain(raw: str) -> str:
    """Normalize ``raw`` to a canonical domain name.

    Accepts bare domains and full URLs; strips scheme, userinfo, port,
    path, and trailing dot, lowercases, and IDNA-encodes non-ASCII labels.
    Raises :class:`InvalidDomain` if the result is not a valid name.
    """
    if not isinstance(raw, str):
        raise InvalidDomain(f"not a string: {raw!r}")
    text = raw.strip()
    if not text:
        raise InvalidDomain("empty domain")
    text = _SCHEME_RE.sub("", text)
    # Host part only: drop path/query/fragment, userinfo, port.
    text = re.split(r"[/?#]", text, maxsplit=1)[0]
    if "@" in text:
        text = text.rsplit("@", 1)[1]
    if text.count(":") == 1:
        host, _, port = text.partition(":")
        if port.isdigit():
            text = host
    text = text.rstrip(".").lower()
    if not text:
        raise InvalidDomain(f"no host in {raw!r}")

    labels = []
    for label in text.split("."):
        if not label.isascii():
            try:
                label = label.encode("idna").decode("ascii")
            except UnicodeError as exc:
                raise InvalidDomain(f"cannot IDNA-encode label {label!r}") from exc
        if len(label) > MAX_LABEL_LENGTH:
            raise InvalidDomain(f"label too long: {label!r}")
        if not _LABEL_RE.match(label):
            raise InvalidDomain(f"invalid label {label!r} in {raw!r}")
        labels.append(label)
    name = ".".join(labels)
    if len(name) > MAX_NAME_LENGTH:
        raise InvalidDomain(f"name too long ({len(name)} octets)")
    return name


def domain_matches(qname: str, entry_domain: str) -> bool:
    """True when ``qname`` equals ``entry_domain`` or is a subdomain of it.

    Both arguments must already be canonical. Matching is on label
    boundaries: ``gpt.example.org`` does not match an entry ``example.org``
    substring-style, only ``*.example.org`` names do.
    """
    if qname == entry_domain:
        return True
    return qname.endswith("." + entry_domain)


@lru_cache(maxsize=1)
def _public_suffixes() -> frozenset[str]:
    text = resources.files("llmsink.data").joinpath("public_suffixes.txt").read_text("utf-8")
    suffixes = set()
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            suffixes.add(line)
    return frozenset(suffixes)


def registrable_domain(domain: str) -> str:
    """Collapse ``domain`` to its registrable base domain.

    Uses the embedded suffix snapshot; names whose TLD has no snapshot
    entry fall back to the default rule (public suffix = last label), so
    ``api.newchat.example`` collapses to ``newchat.example``.
    """
    labels = domain.split(".")
    if len(labels) <= 2:
        return domain
    suffixes = _public_suffixes()
    # Longest listed suffix wins; default rule is the single last label.
    suffix_len = 1
    for take in range(len(labels) - 1, 1, -1):
        if ".".join(labels[-take:]) in suffixes:
            suffix_len = take
            break
    keep = min(len(labels), suffix_len + 1)
    return ".".join(labels[-keep:])
