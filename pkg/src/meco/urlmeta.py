"""URL-derived metadata variants and corpus-level URL analytics.

A document's URL can be conditioned on at several granularities: the absolute
domain (full host, subdomains included), the full host+path, the bare suffix
after the final dot, a top-fraction vocabulary with everything else mapped to
"unknown", or a keyed hash that preserves grouping while destroying semantics.
Model-generated topics come from a separate table and are only looked up here.
"""

from __future__ import annotations

import math
import json
import os
import re
from dataclasses import dataclass, field
from hashlib import blake2b
from pathlib import Path
from typing import Iterable, Optional

from .documents import Document
from .errors import ConfigError, DataError

URL_KINDS = ("domain", "full_url", "suffix", "top_k", "hashed")
ALL_KINDS = URL_KINDS + ("topic", "none")

UNKNOWN_DOMAIN = "unknown"
HASH_KEY_ENV = "MECO_HASH_KEY"

_HOST_RE = re.compile(r"^[a-z0-9]([a-z0-9._-]*[a-z0-9])?$")
_HASHED_RE = re.compile(r"^[a-z0-9]{8}-[a-z0-9]{4}$")
_B36 = "0123456789abcdefghijklmnopqrstuvwxyz"
# ceil(128 / log2(36)): fixed width so leading zeros don't shift the digits
_B36_WIDTH = 25


@dataclass(frozen=True)
class UrlParts:
    scheme: str
    host: str
    path: str
    raw: str


@dataclass(frozen=True)
class MetadataValue:
    kind: str  # one of ALL_KINDS
    value: str

    def __post_init__(self):
        if self.kind not in ALL_KINDS:
            raise ConfigError(f"unknown metadata kind {self.kind!r}")
        if self.kind != "none" and not self.value:
            raise DataError(f"empty metadata value for kind {self.kind!r}")


NO_METADATA = MetadataValue("none", "")


@dataclass(frozen=True)
class MetadataSpec:
    """Which metadata variant to condition on."""

    kind: str
    top_fraction: float | None = None  # only meaningful for top_k

    def __post_init__(self):
        if self.kind not in ALL_KINDS:
            raise ConfigError(f"unknown metadata kind {self.kind!r}")


def parse_url(raw: str) -> UrlParts:
    """Split a crawled URL into scheme/host/path; host lowercased, port and
    userinfo stripped. Scheme-less strings are treated as host-first."""
    if not raw or not raw.strip():
        raise DataError("empty URL")
    raw = raw.strip()
    rest = raw
    scheme = ""
    m = re.match(r"^([A-Za-z][A-Za-z0-9+.-]*):(//)?", raw)
    if m and m.group(2):
        scheme = m.group(1).lower()
        rest = raw[m.end():]
    elif rest.startswith("//"):
        rest = rest[2:]
    netloc, sep, tail = rest.partition("/")
    path = sep + tail if sep else ""
    host = netloc.rsplit("@", 1)[-1]
    if host.count(":") == 1:
        host = host.split(":", 1)[0]
    host = host.lower().rstrip(".")
    if not host or not _HOST_RE.match(host):
        raise DataError(f"no recognizable host in URL {raw!r}")
    return UrlParts(scheme=scheme, host=host, path=path.split("?", 1)[0].split("#", 1)[0], raw=raw)


def hash_key_from_hex(hex_key: str) -> bytes:
    key = bytes.fromhex(hex_key.strip())
    if len(key) != 16:
        raise ConfigError(f"hash key must be 128-bit (32 hex chars), got {len(key)} bytes")
    return key


def hash_key_from_env() -> bytes:
    raw = os.environ.get(HASH_KEY_ENV)
    if not raw:
        raise ConfigError(f"hashed metadata requires the {HASH_KEY_ENV} environment variable (hex)")
    return hash_key_from_hex(raw)


def hash_domain(domain: str, key: bytes) -> str:
    """Keyed 128-bit hash of the domain rendered as 12 base-36 chars with a
    hyphen before the last 4 (e.g. ``q3k09yb1-7fjz``)."""
    if not domain:
        raise DataError("empty domain")
    if len(key) != 16:
        raise ConfigError("hash key must be exactly 16 bytes")
    digest = blake2b(domain.encode("utf-8"), key=key, person=b"meco.url", digest_size=16).digest()
    n = int.from_bytes(digest, "big")
    digits = []
    for _ in range(_B36_WIDTH):
        n, r = divmod(n, 36)
        digits.append(_B36[r])
    s = "".join(reversed(digits))[:12]
    return s[:8] + "-" + s[8:]


def scan_hash_collisions(domains: Iterable[str], key: bytes) -> list[tuple[str, str, str]]:
    """Return (hash, domain_a, domain_b) triples for colliding domain pairs."""
    seen: dict[str, str] = {}
    collisions = []
    for d in domains:
        h = hash_domain(d, key)
        if h in seen and seen[h] != d:
            collisions.append((h, seen[h], d))
        else:
            seen[h] = d
    return collisions


@dataclass
class UrlVocab:
    """Domain frequency table with a retained top-fraction set.

    `total` counts every document seen (URL or not); `domains` counts only
    documents whose URL parsed to a host. Ranking is by count descending,
    ties broken lexicographically.
    """

    domains: dict[str, int]
    total: int
    retained_fraction: float
    retained: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self):
        if not self.retained:
            self.retained = frozenset(self.ranked()[: self.retained_size(self.retained_fraction)])

    def ranked(self) -> list[str]:
        return sorted(self.domains, key=lambda d: (-self.domains[d], d))

    def retained_size(self, fraction: float) -> int:
        if not 0 < fraction <= 1:
            raise ConfigError(f"top fraction must be in (0, 1], got {fraction}")
        return math.ceil(fraction * len(self.domains))

    @property
    def retained_doc_count(self) -> int:
        return sum(self.domains[d] for d in self.retained)

    @property
    def coverage(self) -> float:
        return self.retained_doc_count / self.total if self.total else 0.0

    def to_json(self) -> dict:
        return {
            "total": self.total,
            "domains": [{"name": d, "count": self.domains[d]} for d in self.ranked()],
            "retained_fraction": self.retained_fraction,
            "retained": sorted(self.retained),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "UrlVocab":
        return cls(
            domains={e["name"]: e["count"] for e in obj["domains"]},
            total=obj["total"],
            retained_fraction=obj["retained_fraction"],
            retained=frozenset(obj["retained"]),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_json(), sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )

    @classmethod
    def load(cls, path: str | Path) -> "UrlVocab":
        try:
            return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))
        except (OSError, json.JSONDecodeError, KeyError) as e:
            raise ConfigError(f"cannot load URL vocab from {path}: {e}") from e


def build_url_vocab(stream: Iterable[Document], top_fraction: float) -> UrlVocab:
    counts: dict[str, int] = {}
    total = 0
    for doc in stream:
        total += 1
        host = doc_host(doc)
        if host is not None:
            counts[host] = counts.get(host, 0) + 1
    vocab = UrlVocab(domains=counts, total=total, retained_fraction=top_fraction)
    vocab.retained_size(top_fraction)  # validates the fraction even for empty streams
    return vocab


def merge_domain_counts(parts: Iterable[dict[str, int]]) -> dict[str, int]:
    """Associative merge for per-worker count maps."""
    merged: dict[str, int] = {}
    for part in parts:
        for k, v in part.items():
            merged[k] = merged.get(k, 0) + v
    return merged


def vocab_coverage(vocab: UrlVocab, fraction: float) -> tuple[int, float]:
    """(retained domain count, document coverage) at an arbitrary fraction."""
    k = vocab.retained_size(fraction)
    ranked = vocab.ranked()
    covered = sum(vocab.domains[d] for d in ranked[:k])
    return k, covered / vocab.total if vocab.total else 0.0


def doc_host(doc: Document) -> Optional[str]:
    if not doc.url:
        return None
    try:
        return parse_url(doc.url).host
    except DataError:
        return None


def extract_metadata(
    doc: Document,
    spec: MetadataSpec,
    vocab: UrlVocab | None = None,
    key: bytes | None = None,
    topics: dict[str, str] | None = None,
    on_miss=None,
) -> MetadataValue:
    """Pure mapping from one document to its metadata value under `spec`.

    Documents without a usable URL (or without a topic entry) degrade to
    kind "none", i.e. standard rendering. `on_miss` receives a diagnostic
    string for topic-table misses.
    """
    if spec.kind == "none":
        return NO_METADATA
    if spec.kind == "topic":
        if topics is None:
            raise ConfigError("topic metadata requires a doc_id -> topic table")
        topic = topics.get(doc.doc_id)
        if not topic:
            if on_miss is not None:
                on_miss(f"no topic for doc {doc.doc_id}")
            return NO_METADATA
        return MetadataValue("topic", topic)

    if spec.kind == "top_k" and vocab is None:
        raise ConfigError("top_k metadata requires a URL vocabulary (run analyze-urls first)")
    if spec.kind == "hashed" and key is None:
        raise ConfigError("hashed metadata requires a hash key")

    if not doc.url:
        return NO_METADATA
    try:
        parts = parse_url(doc.url)
    except DataError:
        return NO_METADATA

    if spec.kind == "domain":
        return MetadataValue("domain", parts.host)
    if spec.kind == "full_url":
        return MetadataValue("full_url", parts.host + parts.path)
    if spec.kind == "suffix":
        return MetadataValue("suffix", parts.host.rsplit(".", 1)[-1])
    if spec.kind == "top_k":
        value = parts.host if parts.host in vocab.retained else UNKNOWN_DOMAIN
        return MetadataValue("top_k", value)
    if spec.kind == "hashed":
        return MetadataValue("hashed", hash_domain(parts.host, key))
    raise ConfigError(f"unhandled metadata kind {spec.kind!r}")
