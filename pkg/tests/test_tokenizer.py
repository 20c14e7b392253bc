import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from meco.errors import ConfigError, DataError
from meco.tokenizer import ByteTokenizer, VocabTokenizer, load_tokenizer


def test_builtin_constants(byte_tok):
    assert byte_tok.spec.vocab_size == 259
    assert byte_tok.spec.bos_id == 0
    assert byte_tok.spec.eos_id == 1
    assert byte_tok.spec.pad_id == 2


def test_builtin_byte_identity_plus_offset(byte_tok):
    assert byte_tok.encode("AB").tolist() == [65 + 3, 66 + 3]


def test_empty_round_trip(byte_tok):
    assert byte_tok.encode("").tolist() == []
    assert byte_tok.decode([]) == ""


def test_specials_render_empty(byte_tok):
    assert byte_tok.decode([byte_tok.spec.bos_id]) == ""
    assert byte_tok.decode([0, 1, 2]) == ""


def test_out_of_range_id_rejected(byte_tok):
    with pytest.raises(DataError):
        byte_tok.decode([259])


def test_encode_never_emits_specials(byte_tok):
    ids = byte_tok.encode("some text with\x00controls\x01\x02")
    assert (ids >= 3).all()


@given(st.text(max_size=500))
@settings(max_examples=200, deadline=None)
def test_round_trip_arbitrary_utf8(text):
    tok = ByteTokenizer()
    assert tok.decode(tok.encode(text)) == text


def test_round_trip_multibyte(byte_tok):
    s = "héllo wörld — ⚙️ 日本語"
    assert byte_tok.decode(byte_tok.encode(s)) == s


def test_load_builtin_twice_identical():
    a = load_tokenizer("builtin")
    b = load_tokenizer("builtin")
    assert a.spec.impl_id == b.spec.impl_id


def _write_vocab(path, tokens, bos=0, eos=1, pad=2, drop=None):
    obj = {"tokens": tokens, "bos": bos, "eos": eos, "pad": pad}
    if drop:
        del obj[drop]
    path.write_text(json.dumps(obj), encoding="utf-8")
    return path


def test_external_vocab_greedy_longest_match(tmp_path):
    tokens = ["<bos>", "<eos>", "<pad>", "a", "b", "ab", "abc"]
    tok = load_tokenizer(_write_vocab(tmp_path / "v.json", tokens))
    assert tok.encode("abcab").tolist() == [6, 5]
    assert tok.decode([6, 5]) == "abcab"


def test_external_vocab_missing_special_names_it(tmp_path):
    path = _write_vocab(tmp_path / "v.json", ["x"], drop="eos")
    with pytest.raises(ConfigError, match="eos"):
        load_tokenizer(path)


def test_external_vocab_same_file_same_impl_id(tmp_path):
    path = _write_vocab(tmp_path / "v.json", ["<b>", "<e>", "<p>", "a"])
    assert load_tokenizer(path).spec.impl_id == load_tokenizer(path).spec.impl_id


def test_external_vocab_impl_id_tracks_bytes(tmp_path):
    a = load_tokenizer(_write_vocab(tmp_path / "a.json", ["<b>", "<e>", "<p>", "a"]))
    b = load_tokenizer(_write_vocab(tmp_path / "b.json", ["<b>", "<e>", "<p>", "b"]))
    assert a.spec.impl_id != b.spec.impl_id


def test_external_vocab_byte_fallback(tmp_path):
    tokens = ["<b>", "<e>", "<p>", "hi"] + [f"<0x{i:02X}>" for i in range(256)]
    tok = load_tokenizer(_write_vocab(tmp_path / "v.json", tokens))
    ids = tok.encode("hi é")
    assert ids[0] == 3
    assert tok.decode(ids) == "hi é"


def test_external_vocab_unknown_char_without_fallback(tmp_path):
    tok = load_tokenizer(_write_vocab(tmp_path / "v.json", ["<b>", "<e>", "<p>", "a"]))
    with pytest.raises(DataError, match="fallback"):
        tok.encode("z")


def test_external_vocab_malformed_file(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_tokenizer(path)


def test_duplicate_special_ids_rejected():
    with pytest.raises(ConfigError):
        VocabTokenizer(["a", "b"], bos_id=0, eos_id=0, pad_id=1, impl_id="00" * 32)
