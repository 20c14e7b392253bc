"""End-to-end build: read, split, condition, tokenize, pack, shard.

One pass over the corpus. Per-document work (parse, split assignment,
metadata extraction, tokenization) can fan out over worker processes; the
results are merged back in input order and packed sequentially per stage, so
output bytes are identical for any worker count.
"""

from __future__ import annotations

import json
import logging
import multiprocessing as mp
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

from . import __version__
from .conditioning import TokenizedDocument, tokenize_document
from .documents import Diagnostic, assign_split, corpus_files, parse_record
from .errors import ConfigError, DataError
from .packing import SequencePacker
from .schedule import SchedulePlan, STAGE_DIRS, TrainConfig, interleave_choice, plan_from_counts
from .shards import ShardWriter
from .tokenizer import load_tokenizer
from .topics import load_topic_table
from .urlmeta import (
    MetadataSpec,
    NO_METADATA,
    UrlVocab,
    extract_metadata,
    hash_key_from_env,
    hash_key_from_hex,
)

log = logging.getLogger(__name__)

LINES_PER_CHUNK = 256


@dataclass
class BuildOptions:
    inputs: list[str]
    out_dir: str
    metadata: str = "domain"
    strategy: str = "two_stage"
    cooldown_fraction: float = 0.10
    interleave_p: float = 0.9
    seq_len: int = 8192
    batch_tokens: int = 4_194_304
    peak_lr: float = 3e-3
    final_lr_ratio: float = 0.1
    warmup_fraction: float = 0.05
    pack_policy: str = "truncate"
    seed: int = 0
    workers: int = 1
    seqs_per_shard: int = 1024
    tokenizer: str = "builtin"
    vocab_path: str | None = None
    topics_path: str | None = None
    hash_key_hex: str | None = None
    eos_loss: bool = True
    lr_table: bool = False

    def snapshot(self) -> dict:
        obj = dict(self.__dict__)
        obj.pop("hash_key_hex")  # never persist the secret
        return obj


@dataclass
class BuildResult:
    out_dir: Path
    plan: SchedulePlan
    stage_manifests: dict[str, dict]
    diagnostics: list[Diagnostic] = field(default_factory=list)


@dataclass
class _WorkerState:
    tokenizer: object
    spec: MetadataSpec
    vocab: UrlVocab | None
    key: bytes | None
    topics: dict[str, str] | None
    seed: int
    strategy: str
    fractions: list[tuple[str, float]]
    interleave_p: float
    eos_loss: bool


_W: _WorkerState | None = None


def _init_worker(tokenizer_path, spec, vocab, key, topics, seed, strategy, fractions,
                 interleave_p, eos_loss):
    global _W
    _W = _WorkerState(
        tokenizer=load_tokenizer(tokenizer_path),
        spec=spec,
        vocab=vocab,
        key=key,
        topics=topics,
        seed=seed,
        strategy=strategy,
        fractions=fractions,
        interleave_p=interleave_p,
        eos_loss=eos_loss,
    )


def _stage_and_conditioned(doc_id: str) -> tuple[str | None, bool]:
    st = _W
    if st.strategy == "two_stage":
        stage = assign_split(doc_id, st.fractions, st.seed)
        return stage, stage == "cond"
    if st.strategy == "standard":
        return "std", False
    if st.strategy == "all_conditioned":
        return "cond", True
    # interleaved: one stream, per-document rendering choice
    return "mix", interleave_choice(doc_id, st.seed, st.interleave_p)


def _process_chunk(chunk):
    """(file_name, first_line_no, lines) -> (rows, diagnostics).

    rows: (stage, doc_id, ids, mask, n_prefix) in input order.
    """
    st = _W
    file_name, first_line, lines = chunk
    rows = []
    diags = []
    for i, raw in enumerate(lines):
        line_no = first_line + i
        if not raw.strip():
            continue
        try:
            doc = parse_record(raw, file_name, line_no)
        except DataError as e:
            diags.append((file_name, line_no, str(e)))
            continue
        stage, conditioned = _stage_and_conditioned(doc.doc_id)
        if stage is None:
            continue
        if conditioned:
            meta = extract_metadata(doc, st.spec, vocab=st.vocab, key=st.key, topics=st.topics)
        else:
            meta = NO_METADATA
        tok = tokenize_document(doc, meta, st.tokenizer, eos_loss=st.eos_loss)
        rows.append((stage, doc.doc_id, tok.ids, tok.loss_mask, tok.n_prefix_tokens))
    return rows, diags


def _iter_chunks(files: list[Path]) -> Iterator[tuple[str, int, list[str]]]:
    for file in files:
        with open(file, "r", encoding="utf-8") as fh:
            buf: list[str] = []
            first = 1
            for line_no, raw in enumerate(fh, start=1):
                if not buf:
                    first = line_no
                buf.append(raw)
                if len(buf) >= LINES_PER_CHUNK:
                    yield (file.name, first, buf)
                    buf = []
            if buf:
                yield (file.name, first, buf)


def _resolve_metadata_inputs(opts: BuildOptions):
    spec = MetadataSpec(kind=opts.metadata)
    vocab = key = topics = None
    if opts.metadata == "top_k":
        if not opts.vocab_path:
            raise ConfigError(
                "metadata top_k needs a URL vocabulary; run `meco analyze-urls` and pass --vocab"
            )
        vocab = UrlVocab.load(opts.vocab_path)
    if opts.metadata == "hashed":
        key = hash_key_from_hex(opts.hash_key_hex) if opts.hash_key_hex else hash_key_from_env()
    if opts.metadata == "topic":
        if not opts.topics_path:
            raise ConfigError(
                "metadata topic needs a topic table; run `meco annotate-topics` and pass --topics"
            )
        topics = load_topic_table(opts.topics_path)
    return spec, vocab, key, topics


def run_build(opts: BuildOptions) -> BuildResult:
    if opts.strategy not in STAGE_DIRS:
        raise ConfigError(f"unknown strategy {opts.strategy!r}")
    tokenizer = load_tokenizer(opts.tokenizer)
    spec, vocab, key, topics = _resolve_metadata_inputs(opts)
    files = corpus_files(opts.inputs)
    out = Path(opts.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        return _run_build_inner(opts, tokenizer, spec, vocab, key, topics, files, out)
    except BaseException:
        # a failed run leaves no partial artifacts behind
        import shutil

        for name in STAGE_DIRS[opts.strategy].values():
            shutil.rmtree(out / name, ignore_errors=True)
        for leftover in ("plan.json", "run.json"):
            (out / leftover).unlink(missing_ok=True)
        raise


def _run_build_inner(opts, tokenizer, spec, vocab, key, topics, files, out) -> BuildResult:

    stages = dict(STAGE_DIRS[opts.strategy])  # role -> dir name
    if opts.strategy == "two_stage":
        fractions = [("cond", 1.0 - opts.cooldown_fraction), ("cool", opts.cooldown_fraction)]
        renderings = {"cond": "conditioned", "cool": "standard"}
    elif opts.strategy == "standard":
        fractions = [("std", 1.0)]
        renderings = {"std": "standard"}
    elif opts.strategy == "all_conditioned":
        fractions = [("cond", 1.0)]
        renderings = {"cond": "conditioned"}
    else:
        fractions = [("mix", 1.0)]
        renderings = {"mix": "interleaved"}

    packers = {
        name: SequencePacker(opts.seq_len, tokenizer.spec.pad_id, opts.pack_policy)
        for name in renderings
    }
    writers = {
        name: ShardWriter(out / name, opts.seqs_per_shard, tokenizer.spec, renderings[name], opts.seq_len)
        for name in renderings
    }
    doc_id_files = {name: open(out / name / "doc_ids.txt", "w", encoding="utf-8") for name in renderings}

    init_args = (
        opts.tokenizer,
        spec,
        vocab,
        key,
        topics,
        opts.seed,
        opts.strategy,
        fractions,
        opts.interleave_p,
        opts.eos_loss,
    )
    diagnostics: list[Diagnostic] = []
    buffers: dict[str, list[TokenizedDocument]] = {name: [] for name in renderings}
    FEED_DOCS = 512

    def consume(rows, diags):
        for file_name, line_no, msg in diags:
            diagnostics.append(Diagnostic(file_name, line_no, msg))
            log.warning("%s:%d: %s", file_name, line_no, msg)
        for stage, doc_id, ids, mask, n_prefix in rows:
            doc_id_files[stage].write(doc_id + "\n")
            buffers[stage].append(TokenizedDocument(doc_id, ids, mask, n_prefix))
            if len(buffers[stage]) >= FEED_DOCS:
                writers[stage].add_many(packers[stage].feed(buffers[stage]))
                buffers[stage] = []

    try:
        if opts.workers <= 1:
            _init_worker(*init_args)
            for chunk in _iter_chunks(files):
                rows, diags = _process_chunk(chunk)
                consume(rows, diags)
        else:
            ctx = mp.get_context("fork")
            with ctx.Pool(opts.workers, initializer=_init_worker, initargs=init_args) as pool:
                for rows, diags in pool.imap(_process_chunk, _iter_chunks(files), chunksize=1):
                    consume(rows, diags)
        for name in renderings:
            if buffers[name]:
                writers[name].add_many(packers[name].feed(buffers[name]))
            tail = packers[name].flush()
            if tail is not None:
                writers[name].add(tail)
    finally:
        for fh in doc_id_files.values():
            fh.close()

    # close() flushes the final partial shard, so counts are only final here
    stage_manifests = {}
    for name in renderings:
        manifest = writers[name].close(stats=packers[name].stats, plan_ref="../plan.json")
        stage_manifests[name] = manifest.to_json()

    cfg = TrainConfig(
        total_tokens=max(1, sum(p.stats.emitted_tokens for p in packers.values())),
        peak_lr=opts.peak_lr,
        final_lr_ratio=opts.final_lr_ratio,
        warmup_fraction=opts.warmup_fraction,
        batch_tokens=opts.batch_tokens,
    )
    n_cond = writers[stages["conditioning"]].total
    n_cool = writers[stages["cooldown"]].total if "cooldown" in stages else 0
    plan = plan_from_counts(
        n_cond, n_cool, opts.seq_len, cfg, strategy=opts.strategy, interleave_p=opts.interleave_p
    )
    if opts.lr_table:
        plan.with_lr_table()
    plan.save(out / "plan.json")

    run_log = {
        "version": __version__,
        "seed": opts.seed,
        "config": opts.snapshot(),
        "stats": {name: packers[name].stats.to_json() for name in renderings},
        "diagnostics": len(diagnostics),
    }
    (out / "run.json").write_text(
        json.dumps(run_log, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    return BuildResult(out_dir=out, plan=plan, stage_manifests=stage_manifests, diagnostics=diagnostics)


def stage_doc_ids(out_dir: str | Path, stage: str) -> list[str]:
    path = Path(out_dir) / stage / "doc_ids.txt"
    return [line.strip() for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]


def verify_build(out_dir: str | Path) -> tuple[bool, list[str]]:
    """Check a build directory: plan invariants, shard integrity, stage
    doc-id disjointness."""
    from .schedule import verify_plan
    from .shards import verify_shards

    out = Path(out_dir)
    failures: list[str] = []
    try:
        plan = SchedulePlan.load(out / "plan.json")
    except ConfigError as e:
        return False, [str(e)]
    report = verify_plan(plan)
    failures.extend(f"plan: {msg}" for msg in report.failures)
    id_sets: dict[str, set[str]] = {}
    for role, stage in plan.splits.items():
        stage_dir = out / stage
        if not stage_dir.is_dir():
            failures.append(f"missing stage directory {stage}/")
            continue
        shard_report = verify_shards(stage_dir)
        failures.extend(f"{stage}: {msg}" for msg in shard_report.failures)
        ids_path = stage_dir / "doc_ids.txt"
        if ids_path.is_file():
            id_sets[stage] = set(stage_doc_ids(out, stage))
    names = list(id_sets)
    for i in range(len(names)):
        for j in range(i + 1, len(names)):
            overlap = id_sets[names[i]] & id_sets[names[j]]
            if overlap:
                failures.append(
                    f"stages {names[i]} and {names[j]} share {len(overlap)} document ids"
                )
    return not failures, failures
