"""Model-generated topic metadata via an external instruction-model endpoint.

Annotation is an offline pre-pass producing a doc_id -> topic table; the
conditioning pipeline only ever reads the table. Every request is cached on
disk keyed by the prompt hash, so re-runs are free. Requests use greedy
decoding (temperature 0) against a chat-completions-style JSON API.

The cleaning rules in postprocess_topic (quote stripping, whitespace
collapse, 4-word cap) are this implementation's own.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

from .documents import Document
from .errors import ConfigError, DataError, ExternalServiceError
from .tokenizer import Tokenizer

log = logging.getLogger(__name__)

TOPIC_PROMPT_TEMPLATE = (
    "Based on the given sampled snippet from a document (could be a webpage, a book, "
    "a codebase, a paper, or anything else), write a domain keyphrase (within 4 words; "
    "for example, code, international news, food blog, biography, science fiction, "
    "politics essay, gaming forum, algebra quiz, physics textbook, restaurant "
    "advertisement, religous story, etc.) for the document. The \"domain keyphrase\" "
    "should consider both the topics and the genre/source of the document.\n\n"
    "*** Start of the snippet ***\n\n"
    "{{snippet}}\n\n"
    "*** End of the snippet ***\n\n"
    "Now output the domain (do not output other things):"
)

MAX_TOPIC_WORDS = 4

_QUOTE_CHARS = "\"'`“”‘’"


@dataclass
class AnnotatorConfig:
    base_url: str
    model: str
    cache_dir: str | Path
    api_key_env: str = "MECO_ANNOTATOR_API_KEY"
    max_snippet_tokens: int = 1024
    timeout: float = 60.0
    max_retries: int = 3
    retry_base_delay: float = 0.5
    concurrency: int = 8

    def __post_init__(self):
        if self.max_snippet_tokens < 1:
            raise ConfigError("max_snippet_tokens must be >= 1")
        if self.max_retries < 0:
            raise ConfigError("max_retries must be >= 0")


@dataclass
class TopicRecord:
    doc_id: str
    topic: str
    raw: str
    prompt_sha256: str


@dataclass
class AnnotationOutcome:
    records: list[TopicRecord]
    failures: list[tuple[str, str]] = field(default_factory=list)  # (doc_id, reason)
    requests_made: int = 0


def extract_snippet(doc: Document, tokenizer: Tokenizer, max_tokens: int) -> str:
    """First max_tokens tokens of the document, decoded back to text.

    A byte-level token cut can land inside a multibyte character; trailing
    ids are dropped (at most 3) until the prefix decodes cleanly.
    """
    if not doc.text:
        raise DataError(f"document {doc.doc_id} has empty text")
    ids = tokenizer.encode(doc.text)[:max_tokens]
    for trim in range(4):
        try:
            return tokenizer.decode(ids[: len(ids) - trim])
        except UnicodeDecodeError:
            continue
    raise DataError(f"cannot decode snippet prefix for document {doc.doc_id}")


def render_topic_prompt(snippet: str) -> str:
    if not snippet:
        raise DataError("empty snippet")
    return TOPIC_PROMPT_TEMPLATE.replace("{{snippet}}", snippet)


def postprocess_topic(raw: str) -> str:
    """Strip wrapping, collapse whitespace, cap at 4 words."""
    cleaned = raw.strip().strip(_QUOTE_CHARS + ".,;:!?*()[]{}").strip()
    cleaned = re.sub(r"\s+", " ", cleaned)
    words = cleaned.split(" ") if cleaned else []
    if not words or not cleaned:
        raise DataError("topic is empty after cleaning")
    if len(words) > MAX_TOPIC_WORDS:
        log.warning("topic %r exceeds %d words; truncating", cleaned, MAX_TOPIC_WORDS)
        words = words[:MAX_TOPIC_WORDS]
    return " ".join(words)


def _default_transport(url: str, payload: dict, timeout: float, headers: dict) -> dict:
    import requests

    resp = requests.post(url, json=payload, timeout=timeout, headers=headers)
    resp.raise_for_status()
    return resp.json()


def _endpoint_url(base_url: str) -> str:
    if "chat/completions" in base_url:
        return base_url
    return base_url.rstrip("/") + "/v1/chat/completions"


def _cache_path(cache_dir: Path, prompt_sha: str) -> Path:
    return cache_dir / f"{prompt_sha}.json"


def _write_cache(path: Path, obj: dict) -> None:
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(obj, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")
    os.replace(tmp, path)


def annotate_batch(
    docs: Iterable[Document],
    tokenizer: Tokenizer,
    config: AnnotatorConfig,
    transport: Callable[[str, dict, float, dict], dict] | None = None,
) -> AnnotationOutcome:
    """Annotate documents with topics; results come back in input order.

    `transport` exists for tests; the default posts JSON over HTTP. Failures
    after max_retries are recorded and skipped, not fatal.
    """
    doc_list = list(docs)
    cache_dir = Path(config.cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    send = transport or _default_transport
    url = _endpoint_url(config.base_url)
    headers = {"Content-Type": "application/json"}
    api_key = os.environ.get(config.api_key_env, "")
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"
    outcome = AnnotationOutcome(records=[])
    count_lock = threading.Lock()

    def annotate_one(doc: Document):
        snippet = extract_snippet(doc, tokenizer, config.max_snippet_tokens)
        prompt = render_topic_prompt(snippet)
        sha = hashlib.sha256(prompt.encode("utf-8")).hexdigest()
        cached = _cache_path(cache_dir, sha)
        if cached.is_file():
            obj = json.loads(cached.read_text(encoding="utf-8"))
            return TopicRecord(doc.doc_id, obj["topic"], obj["raw"], obj["prompt_sha256"])
        payload = {
            "model": config.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0,
        }
        resp = None
        last_error: Exception | None = None
        for attempt in range(config.max_retries + 1):
            if attempt:
                time.sleep(config.retry_base_delay * 2 ** (attempt - 1))
            try:
                with count_lock:
                    outcome.requests_made += 1
                resp = send(url, payload, config.timeout, headers)
                break
            except Exception as e:  # transport errors retry with backoff
                last_error = e
        if resp is None:
            raise ExternalServiceError(
                f"annotation failed after {config.max_retries + 1} attempts: {last_error}"
            )
        try:
            raw = resp["choices"][0]["message"]["content"]
            if not isinstance(raw, str):
                raise TypeError("response content is not a string")
        except (KeyError, IndexError, TypeError) as e:
            raise DataError(f"malformed response: {e}") from e
        topic = postprocess_topic(raw)
        record = TopicRecord(doc.doc_id, topic, raw, sha)
        _write_cache(
            cached, {"doc_id": doc.doc_id, "prompt_sha256": sha, "raw": raw, "topic": topic}
        )
        return record

    with ThreadPoolExecutor(max_workers=max(1, config.concurrency)) as pool:
        results = pool.map(lambda d: _safe(annotate_one, d), doc_list)
        for doc, result in zip(doc_list, results):
            if isinstance(result, TopicRecord):
                outcome.records.append(result)
            else:
                outcome.failures.append((doc.doc_id, str(result)))
    return outcome


def _safe(fn, doc):
    try:
        return fn(doc)
    except Exception as e:
        return e


def save_topic_table(records: Iterable[TopicRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps({"doc_id": rec.doc_id, "topic": rec.topic}, ensure_ascii=False) + "\n")


def load_topic_table(path: str | Path) -> dict[str, str]:
    table: dict[str, str] = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                obj = json.loads(line)
                table[str(obj["doc_id"])] = str(obj["topic"])
    except (OSError, json.JSONDecodeError, KeyError) as e:
        raise ConfigError(f"cannot load topic table from {path}: {e}") from e
    return table
