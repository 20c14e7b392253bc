"""Tokenizer abstraction with a hermetic byte-level default.

The built-in tokenizer maps each UTF-8 byte to one id (offset past the three
special tokens), so token counts are exact byte counts and round-trips are
guaranteed without any external vocabulary file. A JSON vocab file can be
loaded instead for real tokenizers; its implementation id is the SHA-256 of
the file so shard headers can detect mismatches.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError

BUILTIN_BOS = 0
BUILTIN_EOS = 1
BUILTIN_PAD = 2
_BYTE_OFFSET = 3
_BUILTIN_VOCAB = 256 + _BYTE_OFFSET

# Bumping this string invalidates shard compatibility on purpose.
_BUILTIN_FINGERPRINT = b"meco-byte-tokenizer-v1 vocab=259 bos=0 eos=1 pad=2"


@dataclass(frozen=True)
class TokenizerSpec:
    vocab_size: int
    bos_id: int
    eos_id: int
    pad_id: int
    impl_id: str  # 64 hex chars; stored as 32 raw bytes in shard headers

    def __post_init__(self):
        ids = (self.bos_id, self.eos_id, self.pad_id)
        if len(set(ids)) != 3 or any(i < 0 or i >= self.vocab_size for i in ids):
            raise ConfigError(
                f"special ids must be distinct and < vocab size: {ids} vs {self.vocab_size}"
            )


class ByteTokenizer:
    """One id per UTF-8 byte; ids 0..2 are bos/eos/pad, bytes start at 3."""

    spec = TokenizerSpec(
        vocab_size=_BUILTIN_VOCAB,
        bos_id=BUILTIN_BOS,
        eos_id=BUILTIN_EOS,
        pad_id=BUILTIN_PAD,
        impl_id=hashlib.sha256(_BUILTIN_FINGERPRINT).hexdigest(),
    )

    def encode(self, text: str) -> np.ndarray:
        """Text to uint32 ids. Never emits special tokens."""
        raw = text.encode("utf-8")
        return np.frombuffer(raw, dtype=np.uint8).astype(np.uint32) + _BYTE_OFFSET

    def decode(self, ids, errors: str = "strict") -> str:
        """Inverse of encode; special ids render as empty strings."""
        arr = np.asarray(ids, dtype=np.int64)
        if arr.size == 0:
            return ""
        if arr.min() < 0 or arr.max() >= _BUILTIN_VOCAB:
            raise DataError(f"token id out of range for byte tokenizer: {arr.max()}")
        arr = arr[arr >= _BYTE_OFFSET]
        return (arr - _BYTE_OFFSET).astype(np.uint8).tobytes().decode("utf-8", errors=errors)


class VocabTokenizer:
    """Greedy longest-match tokenizer over an explicit token list.

    Unknown characters fall back to Llama-style "<0xNN>" byte tokens when the
    vocab provides them; otherwise encoding such text is an error.
    """

    def __init__(self, tokens: list[str], bos_id: int, eos_id: int, pad_id: int, impl_id: str):
        self.tokens = tokens
        self.spec = TokenizerSpec(len(tokens), bos_id, eos_id, pad_id, impl_id)
        self._specials = {bos_id, eos_id, pad_id}
        self._index: dict[str, int] = {}
        for i, tok in enumerate(tokens):
            if i not in self._specials and tok not in self._index:
                self._index[tok] = i
        self._max_len = max((len(t) for t in self._index), default=1)
        self._byte_fallback = {}
        for b in range(256):
            tok = f"<0x{b:02X}>"
            if tok in self._index:
                self._byte_fallback[b] = self._index[tok]

    def encode(self, text: str) -> np.ndarray:
        out: list[int] = []
        pos = 0
        n = len(text)
        while pos < n:
            match_id = -1
            match_len = 0
            for end in range(min(n, pos + self._max_len), pos, -1):
                tid = self._index.get(text[pos:end])
                if tid is not None:
                    match_id, match_len = tid, end - pos
                    break
            if match_id >= 0:
                out.append(match_id)
                pos += match_len
                continue
            raw = text[pos].encode("utf-8")
            if not all(b in self._byte_fallback for b in raw):
                raise DataError(
                    f"no token or <0xNN> byte fallback covers {text[pos]!r} at position {pos}"
                )
            out.extend(self._byte_fallback[b] for b in raw)
            pos += 1
        return np.asarray(out, dtype=np.uint32)

    def decode(self, ids, errors: str = "strict") -> str:
        del errors  # vocab entries are whole strings; nothing to repair
        parts = []
        pending: list[int] = []  # run of byte-fallback tokens

        def flush():
            if pending:
                parts.append(bytes(pending).decode("utf-8", errors="replace"))
                pending.clear()

        byte_of = {tid: b for b, tid in self._byte_fallback.items()}
        for i in np.asarray(ids, dtype=np.int64).tolist():
            if i < 0 or i >= self.spec.vocab_size:
                raise DataError(f"token id out of range: {i}")
            if i in self._specials:
                flush()
                continue
            if i in byte_of:
                pending.append(byte_of[i])
                continue
            flush()
            parts.append(self.tokens[i])
        flush()
        return "".join(parts)


Tokenizer = ByteTokenizer | VocabTokenizer


def load_tokenizer(path_or_builtin: str | Path) -> Tokenizer:
    """Return the built-in byte tokenizer or load a JSON vocab file.

    Vocab format: {"tokens": [...], "bos": int, "eos": int, "pad": int}.
    The implementation id is the SHA-256 of the file bytes.
    """
    if str(path_or_builtin) == "builtin":
        return ByteTokenizer()
    path = Path(path_or_builtin)
    try:
        raw = path.read_bytes()
        obj = json.loads(raw)
    except OSError as e:
        raise ConfigError(f"cannot read tokenizer file {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"malformed tokenizer file {path}: {e}") from e
    if not isinstance(obj, dict) or not isinstance(obj.get("tokens"), list):
        raise ConfigError(f"tokenizer file {path} must contain a 'tokens' list")
    for name in ("bos", "eos", "pad"):
        if not isinstance(obj.get(name), int):
            raise ConfigError(f"tokenizer file {path} is missing special token '{name}'")
    tokens = [str(t) for t in obj["tokens"]]
    return VocabTokenizer(
        tokens,
        bos_id=obj["bos"],
        eos_id=obj["eos"],
        pad_id=obj["pad"],
        impl_id=hashlib.sha256(raw).hexdigest(),
    )
