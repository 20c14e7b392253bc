"""Metadata-conditioning templates, loss masks, and conditional prompts.

A conditioned document is rendered as ``<Name>: <value>\\n\\n<body>`` where
Name is "URL" for every URL-derived variant and "Topic" for generated topics.
Loss is carried only by body tokens (and eos): the bos token and the whole
prefix are mask-0. The mask is positional (bit i belongs to token i); the
shift onto next-token targets is the trainer's job.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .documents import Document
from .errors import ConfigError, DataError
from .tokenizer import Tokenizer
from .urlmeta import URL_KINDS, MetadataValue

PREFIX_NAMES = {**{kind: "URL" for kind in URL_KINDS}, "topic": "Topic"}

# Fabricated inference URLs, one per evaluation task.
TASK_URLS = {
    "mmlu": "www.testprepportal.com",
    "arc_easy": "www.sciencestudyquiz.com",
    "arc_challenge": "www.sciencestudyquiz.com",
    "commonsense_qa": "www.quizsmart.com",
    "hellaswag": "www.wikihowquiz.com",
    "openbookqa": "www.factquizmaster.com",
    "piqa": "www.basicknowledgequiz.com",
    "social_iqa": "www.socialskillsassessment.com",
    "winogrande": "www.testpreppractice.com",
    "truthfulqa": "www.factcheckfun.com",
}


@dataclass(frozen=True)
class ConditionedDocument:
    doc_id: str
    prefix: str  # "" for standard rendering
    body: str
    kind: str


@dataclass
class TokenizedDocument:
    doc_id: str
    ids: np.ndarray  # uint32, [bos] + prefix + body + [eos]
    loss_mask: np.ndarray  # uint8, aligned to ids
    n_prefix_tokens: int


def render_prefix(kind: str, value: str) -> str:
    """Byte-exact template: name, colon, one space, value, two newlines."""
    if kind == "none":
        return ""
    name = PREFIX_NAMES.get(kind)
    if name is None:
        raise ConfigError(f"unknown metadata kind {kind!r}")
    if not value:
        raise DataError(f"empty metadata value for kind {kind!r}")
    return f"{name}: {value}\n\n"


def condition_document(doc: Document, metadata: MetadataValue) -> ConditionedDocument:
    return ConditionedDocument(
        doc_id=doc.doc_id,
        prefix=render_prefix(metadata.kind, metadata.value),
        body=doc.text,
        kind=metadata.kind,
    )


def tokenize_document(
    doc: Document,
    metadata: MetadataValue,
    tokenizer: Tokenizer,
    eos_loss: bool = True,
) -> TokenizedDocument:
    """[bos] + prefix + body + [eos] with the loss mask described above.

    `eos_loss=False` removes the terminator from the loss as well.
    """
    if not doc.text:
        raise DataError(f"document {doc.doc_id} has empty text")
    spec = tokenizer.spec
    prefix_ids = tokenizer.encode(render_prefix(metadata.kind, metadata.value))
    body_ids = tokenizer.encode(doc.text)
    n_prefix = len(prefix_ids)
    n = 1 + n_prefix + len(body_ids) + 1
    ids = np.empty(n, np.uint32)
    ids[0] = spec.bos_id
    ids[1:1 + n_prefix] = prefix_ids
    ids[1 + n_prefix:n - 1] = body_ids
    ids[n - 1] = spec.eos_id
    mask = np.ones(n, np.uint8)
    mask[:1 + n_prefix] = 0
    if not eos_loss:
        mask[n - 1] = 0
    return TokenizedDocument(doc_id=doc.doc_id, ids=ids, loss_mask=mask, n_prefix_tokens=n_prefix)


def build_conditional_prompt(url: str, prompt: str) -> str:
    """Prefix an inference prompt with a (real or fabricated) URL."""
    if not url:
        raise DataError("conditional prompts need a non-empty URL")
    return f"URL: {url}\n\n{prompt}"


def task_url(task_name: str) -> str:
    try:
        return TASK_URLS[task_name]
    except KeyError:
        known = ", ".join(sorted(TASK_URLS))
        raise ConfigError(f"unknown task {task_name!r}; known tasks: {known}") from None
