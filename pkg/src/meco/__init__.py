"""Metadata-conditioned corpus pipeline.

Conditions pre-training documents on source metadata (URLs or generated
topics) behind a loss mask, packs them into boundary-respecting fixed-length
sequences, plans a two-stage (conditioning then cooldown) training schedule,
and emits training-ready binary shards.
"""

__version__ = "0.1.0"

from .conditioning import build_conditional_prompt, task_url, tokenize_document
from .documents import Document, read_documents, split_corpus, write_documents
from .packing import PackedSequence, PackingStats, pack
from .schedule import SchedulePlan, TrainConfig, build_plan, lr_at
from .shards import read_shards, verify_shards, write_shards
from .tokenizer import load_tokenizer
from .urlmeta import MetadataSpec, MetadataValue, build_url_vocab, extract_metadata, parse_url

__all__ = [
    "__version__",
    "Document",
    "MetadataSpec",
    "MetadataValue",
    "PackedSequence",
    "PackingStats",
    "SchedulePlan",
    "TrainConfig",
    "build_conditional_prompt",
    "build_plan",
    "build_url_vocab",
    "extract_metadata",
    "load_tokenizer",
    "lr_at",
    "pack",
    "parse_url",
    "read_documents",
    "read_shards",
    "split_corpus",
    "task_url",
    "tokenize_document",
    "verify_shards",
    "write_documents",
    "write_shards",
]
