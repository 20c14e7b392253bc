"""Command-line entry point.

Subcommands: analyze-urls, annotate-topics, build, plan, verify, prompt,
split. A config file (JSON or TOML) supplies defaults; explicit flags win.
Exit codes: 0 ok, 1 usage, 2 data error, 3 config error, 4 external service.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .conditioning import build_conditional_prompt, task_url
from .documents import (
    CorpusManifest,
    assign_split,
    document_to_record,
    read_documents,
    validate_fractions,
)
from .errors import ConfigError, DataError, ExternalServiceError
from .pipeline import BuildOptions, run_build, verify_build
from .schedule import TrainConfig, build_plan
from .topics import AnnotatorConfig, annotate_batch, save_topic_table
from .tokenizer import load_tokenizer
from .urlmeta import build_url_vocab, hash_key_from_env, scan_hash_collisions, vocab_coverage

log = logging.getLogger("meco")

METADATA_CHOICES = ("domain", "full-url", "suffix", "top-k", "hashed", "topic", "none")
STRATEGY_CHOICES = ("standard", "all-conditioned", "interleaved", "two-stage")


def _dashes_to_underscores(value: str) -> str:
    return value.replace("-", "_")


def _parse_tokens(value: str) -> int:
    # accepts 1000000, 1e6, 160e9, 1.6e9
    return int(float(value))


def _parse_fractions(value: str) -> list[tuple[str, float]]:
    pairs = []
    for part in value.split(","):
        name, _, frac = part.partition("=")
        if not name or not frac:
            raise argparse.ArgumentTypeError(f"expected name=fraction, got {part!r}")
        pairs.append((name.strip(), float(frac)))
    return pairs


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    p = Path(path)
    raw = p.read_bytes()
    if p.suffix == ".toml":
        try:
            import tomllib
        except ImportError:
            import tomli as tomllib
        return tomllib.loads(raw.decode("utf-8"))
    return json.loads(raw)


def _overlay(args: argparse.Namespace, config: dict, defaults: dict) -> argparse.Namespace:
    """Precedence: explicit flags > config file > built-in defaults."""
    for key, default in defaults.items():
        if getattr(args, key, None) is None:
            setattr(args, key, config.get(key, default))
    return args


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="meco",
        description="Metadata-conditioned corpus pipeline",
    )
    parser.add_argument("--version", action="version", version=f"meco {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze-urls", help="build the URL frequency vocabulary")
    p.add_argument("inputs", nargs="+", help="corpus files or directories")
    p.add_argument("--out", required=True, help="output vocab JSON path")
    p.add_argument("--top-fraction", type=float, default=None)
    p.add_argument("--hash-check", action="store_true", default=None,
                   help="hash every domain with MECO_HASH_KEY and report collisions")
    p.add_argument("--config")

    p = sub.add_parser("annotate-topics", help="generate topic metadata via an LLM endpoint")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--out", required=True, help="output topic table (JSONL)")
    p.add_argument("--endpoint", default=None, help="annotation endpoint base URL")
    p.add_argument("--model", default=None)
    p.add_argument("--cache-dir", default=None)
    p.add_argument("--api-key-env", default=None)
    p.add_argument("--max-snippet-tokens", type=int, default=None)
    p.add_argument("--timeout", type=float, default=None)
    p.add_argument("--retries", type=int, default=None)
    p.add_argument("--concurrency", type=int, default=None)
    p.add_argument("--tokenizer", default=None)
    p.add_argument("--config")

    p = sub.add_parser("build", help="condition, pack, and shard a corpus")
    p.add_argument("inputs", nargs="+", help="corpus files or directories")
    p.add_argument("out_dir", help="output directory")
    p.add_argument("--metadata", choices=METADATA_CHOICES, default=None)
    p.add_argument("--strategy", choices=STRATEGY_CHOICES, default=None)
    p.add_argument("--cooldown-frac", type=float, default=None)
    p.add_argument("--interleave-p", type=float, default=None)
    p.add_argument("--seq-len", type=int, default=None)
    p.add_argument("--batch-tokens", type=int, default=None)
    p.add_argument("--peak-lr", type=float, default=None)
    p.add_argument("--final-lr-ratio", type=float, default=None)
    p.add_argument("--warmup-frac", type=float, default=None)
    p.add_argument("--pack-policy", choices=("truncate", "pad"), default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--seqs-per-shard", type=int, default=None)
    p.add_argument("--tokenizer", default=None)
    p.add_argument("--vocab", default=None, help="URL vocab JSON (required for top-k)")
    p.add_argument("--topics", default=None, help="topic table JSONL (required for topic)")
    p.add_argument("--eos-loss", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--lr-table", action="store_true", default=None,
                   help="embed the full per-step lr table in plan.json")
    p.add_argument("--config")

    p = sub.add_parser("plan", help="compute a training schedule plan")
    p.add_argument("--tokens", type=_parse_tokens, default=None, help="total training tokens")
    p.add_argument("--batch-tokens", type=int, default=None)
    p.add_argument("--cooldown-frac", type=float, default=None)
    p.add_argument("--strategy", choices=STRATEGY_CHOICES, default=None)
    p.add_argument("--interleave-p", type=float, default=None)
    p.add_argument("--peak-lr", type=float, default=None)
    p.add_argument("--final-lr-ratio", type=float, default=None)
    p.add_argument("--warmup-frac", type=float, default=None)
    p.add_argument("--seq-len", type=int, default=None)
    p.add_argument("--lr-table", action="store_true", default=None,
                   help="embed the full per-step lr table in the plan")
    p.add_argument("--out", default=None, help="write plan JSON here")
    p.add_argument("--config")

    p = sub.add_parser("verify", help="verify a build output directory")
    p.add_argument("out_dir")

    p = sub.add_parser("prompt", help="print a conditional inference prompt")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--task", help="registered task name")
    g.add_argument("--url", help="explicit URL (real or fabricated)")
    p.add_argument("text", nargs="?", default="", help="prompt text to condition")

    p = sub.add_parser("split", help="split a corpus into disjoint subsets")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--fractions", type=_parse_fractions, default=None,
                   help="comma-separated name=fraction pairs (default cond=0.9,cool=0.1)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config")

    return parser


def _cmd_analyze_urls(args) -> int:
    cfg = _load_config(args.config)
    _overlay(args, cfg, {"top_fraction": 0.002, "hash_check": False})
    diags = []
    docs = read_documents(args.inputs, on_bad_record=diags.append)
    vocab = build_url_vocab(docs, args.top_fraction)
    vocab.save(args.out)
    retained, coverage = vocab_coverage(vocab, args.top_fraction)
    print(
        f"analyzed {vocab.total} documents, {len(vocab.domains)} unique domains; "
        f"top {args.top_fraction:.4%} keeps {retained} domains covering {coverage:.1%}"
    )
    if args.hash_check:
        collisions = scan_hash_collisions(vocab.domains, hash_key_from_env())
        for h, a, b in collisions:
            print(f"hash collision {h}: {a} vs {b}", file=sys.stderr)
        print(f"hash check: {len(collisions)} collisions over {len(vocab.domains)} domains")
    if diags:
        print(f"{len(diags)} malformed records skipped", file=sys.stderr)
    return 0


def _cmd_annotate_topics(args) -> int:
    cfg = _load_config(args.config)
    _overlay(
        args,
        cfg,
        {
            "endpoint": None,
            "model": None,
            "cache_dir": None,
            "api_key_env": "MECO_ANNOTATOR_API_KEY",
            "max_snippet_tokens": 1024,
            "timeout": 60.0,
            "retries": 3,
            "concurrency": 8,
            "tokenizer": "builtin",
        },
    )
    if not args.endpoint or not args.model or not args.cache_dir:
        raise ConfigError("annotate-topics needs --endpoint, --model, and --cache-dir")
    config = AnnotatorConfig(
        base_url=args.endpoint,
        model=args.model,
        cache_dir=args.cache_dir,
        api_key_env=args.api_key_env,
        max_snippet_tokens=args.max_snippet_tokens,
        timeout=args.timeout,
        max_retries=args.retries,
        concurrency=args.concurrency,
    )
    tokenizer = load_tokenizer(args.tokenizer)
    diags = []
    docs = list(read_documents(args.inputs, on_bad_record=diags.append))
    outcome = annotate_batch(docs, tokenizer, config)
    save_topic_table(outcome.records, args.out)
    for doc_id, reason in outcome.failures:
        print(f"failed {doc_id}: {reason}", file=sys.stderr)
    print(
        f"annotated {len(outcome.records)}/{len(docs)} documents "
        f"({outcome.requests_made} requests, {len(outcome.failures)} failures)"
    )
    if outcome.failures and not outcome.records:
        raise ExternalServiceError("every annotation request failed")
    return 0


_BUILD_DEFAULTS = {
    "metadata": "domain",
    "strategy": "two-stage",
    "cooldown_frac": 0.10,
    "interleave_p": 0.9,
    "seq_len": 8192,
    "batch_tokens": 4_194_304,
    "peak_lr": 3e-3,
    "final_lr_ratio": 0.1,
    "warmup_frac": 0.05,
    "pack_policy": "truncate",
    "seed": 0,
    "workers": 1,
    "seqs_per_shard": 1024,
    "tokenizer": "builtin",
    "vocab": None,
    "topics": None,
    "eos_loss": True,
    "lr_table": False,
    "hash_key": None,  # config-file only; the env var is the usual channel
}


def _cmd_build(args) -> int:
    cfg = _load_config(args.config)
    _overlay(args, cfg, _BUILD_DEFAULTS)
    opts = BuildOptions(
        inputs=args.inputs,
        out_dir=args.out_dir,
        metadata=_dashes_to_underscores(args.metadata),
        strategy=_dashes_to_underscores(args.strategy),
        cooldown_fraction=args.cooldown_frac,
        interleave_p=args.interleave_p,
        seq_len=args.seq_len,
        batch_tokens=args.batch_tokens,
        peak_lr=args.peak_lr,
        final_lr_ratio=args.final_lr_ratio,
        warmup_fraction=args.warmup_frac,
        pack_policy=args.pack_policy,
        seed=args.seed,
        workers=args.workers,
        seqs_per_shard=args.seqs_per_shard,
        tokenizer=args.tokenizer,
        vocab_path=args.vocab,
        topics_path=args.topics,
        hash_key_hex=args.hash_key,
        eos_loss=args.eos_loss,
        lr_table=args.lr_table,
    )
    result = run_build(opts)
    plan = result.plan
    for stage, manifest in sorted(result.stage_manifests.items()):
        stats = manifest["stats"]
        print(
            f"{stage}: {manifest['total_sequences']} sequences in {len(manifest['files'])} shards "
            f"({stats['documents']} docs, {stats['discarded_tokens']} discarded, "
            f"{stats['padded_tokens']} padded)"
        )
    print(f"plan: T={plan.T} steps, warmup={plan.w}, boundary={plan.b} ({plan.strategy})")
    if result.diagnostics:
        print(f"{len(result.diagnostics)} malformed records skipped", file=sys.stderr)
    return 0


def _cmd_plan(args) -> int:
    cfg_file = _load_config(args.config)
    _overlay(
        args,
        cfg_file,
        {
            "tokens": None,
            "batch_tokens": 4_194_304,
            "cooldown_frac": 0.10,
            "strategy": "two-stage",
            "interleave_p": 0.9,
            "peak_lr": 3e-3,
            "final_lr_ratio": 0.1,
            "warmup_frac": 0.05,
            "seq_len": None,
            "lr_table": False,
            "out": None,
        },
    )
    if not args.tokens:
        raise ConfigError("plan needs --tokens (total training tokens)")
    cfg = TrainConfig(
        total_tokens=args.tokens,
        peak_lr=args.peak_lr,
        final_lr_ratio=args.final_lr_ratio,
        warmup_fraction=args.warmup_frac,
        batch_tokens=args.batch_tokens,
    )
    plan = build_plan(
        cfg,
        strategy=_dashes_to_underscores(args.strategy),
        cooldown_fraction=args.cooldown_frac,
        interleave_p=args.interleave_p,
        seq_len=args.seq_len,
    )
    if args.lr_table:
        plan.with_lr_table()
    cond_tokens = plan.b * cfg.batch_tokens
    cool_tokens = (plan.T - plan.b) * cfg.batch_tokens
    print(
        f"T={plan.T} steps, warmup={plan.w}, boundary={plan.b}; "
        f"conditioning {cond_tokens:,} tokens, cooldown {cool_tokens:,} tokens"
    )
    print(f"lr: 0 -> {cfg.peak_lr} (step {plan.w}) -> {cfg.final_lr_ratio * cfg.peak_lr} (step {plan.T})")
    if args.out:
        plan.save(args.out)
        print(f"wrote {args.out}")
    return 0


def _cmd_verify(args) -> int:
    ok, failures = verify_build(args.out_dir)
    for msg in failures:
        print(f"FAIL {msg}", file=sys.stderr)
    print("ok" if ok else f"{len(failures)} failures")
    return 0 if ok else 2


def _cmd_prompt(args) -> int:
    url = args.url if args.url else task_url(_dashes_to_underscores(args.task))
    sys.stdout.write(build_conditional_prompt(url, args.text) + "\n")
    return 0


def _cmd_split(args) -> int:
    cfg = _load_config(args.config)
    _overlay(args, cfg, {"fractions": [("cond", 0.9), ("cool", 0.1)], "seed": 0})
    fractions = args.fractions
    if isinstance(fractions, dict):  # config-file form {"cond": 0.9}
        fractions = list(fractions.items())
    validate_fractions(fractions)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    handles = {}
    counts = {name: 0 for name, _ in fractions}
    try:
        for name, _ in fractions:
            (out / name).mkdir(exist_ok=True)
            handles[name] = open(out / name / "docs-00000.jsonl", "w", encoding="utf-8")
        diags = []
        for doc in read_documents(args.inputs, on_bad_record=diags.append):
            name = assign_split(doc.doc_id, fractions, args.seed)
            if name is None:
                continue
            handles[name].write(json.dumps(document_to_record(doc), ensure_ascii=False) + "\n")
            counts[name] += 1
    finally:
        for fh in handles.values():
            fh.close()
    import hashlib

    for name, _ in fractions:
        path = out / name / "docs-00000.jsonl"
        data = path.read_bytes()
        manifest = CorpusManifest(
            files=[{"path": path.name, "count": counts[name],
                    "sha256": hashlib.sha256(data).hexdigest()}],
            document_count=counts[name],
            text_bytes=0,
        )
        manifest.text_bytes = sum(
            len(json.loads(line)["text"].encode("utf-8"))
            for line in data.decode("utf-8").splitlines()
            if line.strip()
        )
        manifest.save(out / name / "manifest.json")
    total = sum(counts.values())
    for name, frac in fractions:
        achieved = counts[name] / total if total else 0.0
        print(f"{name}: {counts[name]} docs ({achieved:.3f} vs requested {frac:.3f})")
    return 0


_DISPATCH = {
    "analyze-urls": _cmd_analyze_urls,
    "annotate-topics": _cmd_annotate_topics,
    "build": _cmd_build,
    "plan": _cmd_plan,
    "verify": _cmd_verify,
    "prompt": _cmd_prompt,
    "split": _cmd_split,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        if e.code in (0, None):
            return 0
        return 1
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return _DISPATCH[args.command](args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 3
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 2
    except ExternalServiceError as e:
        print(f"external service error: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
