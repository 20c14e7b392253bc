"""Streaming corpus I/O: newline-delimited JSON records, manifests, splits.

Records carry `text`, optional `url`, optional `id`, optional `source`.
Malformed or empty-text records are dropped with a diagnostic instead of
killing the stream — web corpora are dirty and the pipeline must keep moving.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from hashlib import blake2b
from pathlib import Path
from typing import Callable, Iterable, Iterator, Optional

from .errors import ConfigError, DataError


@dataclass
class Document:
    doc_id: str
    text: str
    url: Optional[str] = None
    source_label: Optional[str] = None


@dataclass(frozen=True)
class Diagnostic:
    path: str
    line: int
    message: str

    def __str__(self) -> str:
        return f"{self.path}:{self.line}: {self.message}"


@dataclass
class CorpusManifest:
    files: list[dict]  # {"path": str, "count": int, "sha256": str}
    document_count: int
    text_bytes: int

    def to_json(self) -> dict:
        return {
            "files": self.files,
            "document_count": self.document_count,
            "text_bytes": self.text_bytes,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "CorpusManifest":
        return cls(obj["files"], obj["document_count"], obj["text_bytes"])

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_json(), sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )

    @classmethod
    def load(cls, path: str | Path) -> "CorpusManifest":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def corpus_files(path: str | Path | Iterable[str | Path]) -> list[Path]:
    """Resolve a file, directory, or explicit list into an ordered file list."""
    if isinstance(path, (str, Path)):
        p = Path(path)
        if p.is_dir():
            files = sorted(q for q in p.iterdir() if q.suffix in (".jsonl", ".json") and q.is_file())
            if not files:
                raise DataError(f"no .jsonl files in directory {p}")
            return files
        if not p.is_file():
            raise DataError(f"corpus path does not exist: {p}")
        return [p]
    files = []
    for item in path:
        files.extend(corpus_files(item))
    return files


def parse_record(raw: str, path_name: str, line_no: int) -> Document:
    """One JSONL line to a Document; raises DataError on anything unusable."""
    try:
        obj = json.loads(raw)
    except json.JSONDecodeError as e:
        raise DataError(f"invalid JSON: {e}") from e
    if not isinstance(obj, dict):
        raise DataError("record is not a JSON object")
    text = obj.get("text")
    if not isinstance(text, str) or not text:
        raise DataError("missing or empty 'text' field")
    doc_id = obj.get("id")
    if doc_id is None:
        doc_id = f"{path_name}#{line_no}"
    url = obj.get("url") or None
    source = obj.get("source") or None
    return Document(doc_id=str(doc_id), text=text, url=url, source_label=source)


def read_documents(
    path: str | Path | Iterable[str | Path],
    on_bad_record: Callable[[Diagnostic], None] | None = None,
) -> Iterator[Document]:
    """Yield Documents in file order then line order.

    Unreadable files are fatal; malformed records produce a Diagnostic via
    `on_bad_record` (if given) and are skipped.
    """
    for file in corpus_files(path):
        try:
            fh = open(file, "r", encoding="utf-8")
        except OSError as e:
            raise DataError(f"cannot read corpus file {file}: {e}") from e
        with fh:
            for line_no, raw in enumerate(fh, start=1):
                if not raw.strip():
                    continue
                try:
                    yield parse_record(raw, file.name, line_no)
                except DataError as e:
                    if on_bad_record is not None:
                        on_bad_record(Diagnostic(str(file), line_no, str(e)))


def document_to_record(doc: Document) -> dict:
    rec = {"id": doc.doc_id, "text": doc.text}
    if doc.url is not None:
        rec["url"] = doc.url
    if doc.source_label is not None:
        rec["source"] = doc.source_label
    return rec


def write_documents(
    stream: Iterable[Document],
    out_dir: str | Path,
    records_per_file: int = 100_000,
    prefix: str = "docs",
) -> CorpusManifest:
    """Write the stream as JSONL chunks plus a manifest.json.

    Round-trip property: read_documents(out_dir) yields the same documents
    field-for-field (directory reads are sorted, and chunk names sort).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files: list[dict] = []
    doc_count = 0
    text_bytes = 0
    tmp_paths: list[Path] = []

    fh = None
    sha = None
    count_in_file = 0
    file_idx = 0

    def open_next():
        nonlocal fh, sha, count_in_file
        tmp = out / f".{prefix}-{file_idx:05d}.jsonl.tmp"
        tmp_paths.append(tmp)
        fh = open(tmp, "wb")
        sha = hashlib.sha256()
        count_in_file = 0

    def close_current():
        nonlocal fh, file_idx
        if fh is None:
            return
        fh.close()
        final = out / f"{prefix}-{file_idx:05d}.jsonl"
        os.replace(tmp_paths[-1], final)
        files.append({"path": final.name, "count": count_in_file, "sha256": sha.hexdigest()})
        fh = None
        file_idx += 1

    try:
        for doc in stream:
            if fh is None:
                open_next()
            payload = (json.dumps(document_to_record(doc), ensure_ascii=False) + "\n").encode("utf-8")
            fh.write(payload)
            sha.update(payload)
            count_in_file += 1
            doc_count += 1
            text_bytes += len(doc.text.encode("utf-8"))
            if count_in_file >= records_per_file:
                close_current()
        close_current()
    except BaseException:
        if fh is not None:
            fh.close()
        for tmp in tmp_paths:
            tmp.unlink(missing_ok=True)
        raise

    manifest = CorpusManifest(files=files, document_count=doc_count, text_bytes=text_bytes)
    manifest.save(out / "manifest.json")
    return manifest


def verify_manifest(dir_path: str | Path) -> list[str]:
    """Re-hash and re-count the files a manifest names; return failures.

    Also checks doc_id uniqueness across the corpus (cheap here, where the
    files are being read back in full anyway).
    """
    out = Path(dir_path)
    manifest = CorpusManifest.load(out / "manifest.json")
    failures = []
    total = 0
    seen_ids: set[str] = set()
    for entry in manifest.files:
        p = out / entry["path"]
        if not p.is_file():
            failures.append(f"missing file {entry['path']}")
            continue
        data = p.read_bytes()
        if hashlib.sha256(data).hexdigest() != entry["sha256"]:
            failures.append(f"checksum mismatch for {entry['path']}")
        n = 0
        for line_no, line in enumerate(data.decode("utf-8").splitlines(), start=1):
            if not line.strip():
                continue
            n += 1
            try:
                doc = parse_record(line, p.name, line_no)
            except DataError:
                continue
            if doc.doc_id in seen_ids:
                failures.append(f"duplicate doc_id {doc.doc_id} at {entry['path']}:{line_no}")
            seen_ids.add(doc.doc_id)
        if n != entry["count"]:
            failures.append(f"count mismatch for {entry['path']}: {n} != {entry['count']}")
        total += entry["count"]
    if total != manifest.document_count:
        failures.append(f"total count mismatch: {total} != {manifest.document_count}")
    return failures


def _unit_hash(doc_id: str, seed: int, person: bytes) -> float:
    digest = blake2b(
        doc_id.encode("utf-8"),
        key=seed.to_bytes(8, "little", signed=False),
        person=person,
        digest_size=8,
    ).digest()
    return int.from_bytes(digest, "big") / 2.0**64


def validate_fractions(fractions: list[tuple[str, float]]) -> None:
    names = [name for name, _ in fractions]
    if len(set(names)) != len(names):
        raise ConfigError(f"split names must be unique: {names}")
    if any(f < 0 for _, f in fractions):
        raise ConfigError("split fractions must be non-negative")
    total = sum(f for _, f in fractions)
    if total > 1.0 + 1e-9:
        raise ConfigError(f"split fractions sum to {total}, must be <= 1.0")


def assign_split(doc_id: str, fractions: list[tuple[str, float]], seed: int) -> Optional[str]:
    """Deterministic split assignment from (doc_id, seed) alone.

    Returns None for the unassigned remainder when fractions sum below 1.
    """
    u = _unit_hash(doc_id, seed, b"meco.split")
    cum = 0.0
    for name, frac in fractions:
        cum += frac
        if u < cum:
            return name
    return None


def split_corpus(
    stream: Iterable[Document], fractions: list[tuple[str, float]], seed: int
) -> dict[str, set[str]]:
    """Materialized split: named pairwise-disjoint doc_id sets."""
    validate_fractions(fractions)
    sets: dict[str, set[str]] = {name: set() for name, _ in fractions}
    for doc in stream:
        name = assign_split(doc.doc_id, fractions, seed)
        if name is not None:
            sets[name].add(doc.doc_id)
    return sets
