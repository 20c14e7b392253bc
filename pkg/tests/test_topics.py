import json

import pytest

from meco.documents import Document
from meco.errors import DataError
from meco.topics import (
    AnnotatorConfig,
    annotate_batch,
    extract_snippet,
    load_topic_table,
    postprocess_topic,
    render_topic_prompt,
    save_topic_table,
)


def make_config(tmp_path, **kw):
    defaults = dict(
        base_url="http://annotator.test",
        model="toy-instruct",
        cache_dir=tmp_path / "cache",
        max_retries=2,
        retry_base_delay=0.0,
        concurrency=4,
    )
    defaults.update(kw)
    return AnnotatorConfig(**defaults)


class FakeEndpoint:
    """Scripted transport: doc text -> reply, with optional failures."""

    def __init__(self, reply_fn, fail_first=0):
        self.reply_fn = reply_fn
        self.fail_first = fail_first
        self.calls = 0

    def __call__(self, url, payload, timeout, headers):
        self.calls += 1
        if self.calls <= self.fail_first:
            raise ConnectionError("flaky")
        assert payload["temperature"] == 0
        assert payload["messages"][0]["role"] == "user"
        prompt = payload["messages"][0]["content"]
        return {"choices": [{"message": {"content": self.reply_fn(prompt)}}]}


# --- snippet ---------------------------------------------------------------


def test_snippet_shorter_than_limit(byte_tok):
    doc = Document("d", "short doc")
    assert extract_snippet(doc, byte_tok, 1024) == "short doc"


def test_snippet_encode_slice_oracle(byte_tok):
    text = "word " * 500
    doc = Document("d", text)
    snippet = extract_snippet(doc, byte_tok, 64)
    assert snippet == byte_tok.decode(byte_tok.encode(text)[:64])
    assert text.startswith(snippet)


def test_snippet_single_token(byte_tok):
    doc = Document("d", "abc")
    assert extract_snippet(doc, byte_tok, 1) == "a"


def test_snippet_multibyte_boundary(byte_tok):
    # é is 2 bytes; cutting after 1 byte must fall back to a clean prefix
    doc = Document("d", "aé")
    assert extract_snippet(doc, byte_tok, 2) == "a"


# --- prompt ----------------------------------------------------------------


def test_prompt_contains_snippet_markers():
    prompt = render_topic_prompt("hello")
    assert "*** Start of the snippet ***\n\nhello\n\n*** End of the snippet ***" in prompt


def test_prompt_ends_with_output_instruction():
    prompt = render_topic_prompt("x")
    assert prompt.endswith("Now output the domain (do not output other things):")


def test_prompt_mentions_word_limit_and_examples():
    prompt = render_topic_prompt("x")
    assert "within 4 words" in prompt
    assert "gaming forum" in prompt


def test_prompts_differ_only_in_snippet():
    a = render_topic_prompt("AAA")
    b = render_topic_prompt("BBB")
    assert a.replace("AAA", "") == b.replace("BBB", "")


# --- post-processing --------------------------------------------------------


def test_postprocess_strips_quotes_and_whitespace():
    assert postprocess_topic('  "gaming forum"\n') == "gaming forum"


def test_postprocess_identity_on_clean_word():
    assert postprocess_topic("code") == "code"


def test_postprocess_truncates_to_four_words():
    assert postprocess_topic("a b c d e") == "a b c d"


def test_postprocess_collapses_internal_whitespace():
    assert postprocess_topic("science \t fiction") == "science fiction"


def test_postprocess_empty_after_cleaning():
    with pytest.raises(DataError):
        postprocess_topic('"..."')


# --- annotate_batch ---------------------------------------------------------


def test_annotate_happy_path(tmp_path, byte_tok):
    docs = [Document(f"d{i}", f"doc number {i} about trains") for i in range(5)]
    endpoint = FakeEndpoint(lambda p: "railway history")
    outcome = annotate_batch(docs, byte_tok, make_config(tmp_path), transport=endpoint)
    assert [r.doc_id for r in outcome.records] == [d.doc_id for d in docs]
    assert all(r.topic == "railway history" for r in outcome.records)
    assert outcome.requests_made == 5
    assert outcome.failures == []


def test_annotate_second_run_hits_cache(tmp_path, byte_tok):
    docs = [Document(f"d{i}", f"text {i}") for i in range(4)]
    endpoint = FakeEndpoint(lambda p: "Technology leader biography")
    cfg = make_config(tmp_path)
    first = annotate_batch(docs, byte_tok, cfg, transport=endpoint)
    assert first.records[0].topic == "Technology leader biography"
    second = annotate_batch(docs, byte_tok, cfg, transport=endpoint)
    assert second.requests_made == 0
    assert endpoint.calls == 4
    assert [(r.doc_id, r.topic, r.raw, r.prompt_sha256) for r in second.records] == [
        (r.doc_id, r.topic, r.raw, r.prompt_sha256) for r in first.records
    ]


def test_annotate_retries_then_succeeds(tmp_path, byte_tok):
    docs = [Document("d0", "only doc")]
    endpoint = FakeEndpoint(lambda p: "ok topic", fail_first=2)
    outcome = annotate_batch(docs, byte_tok, make_config(tmp_path), transport=endpoint)
    assert outcome.records[0].topic == "ok topic"
    assert outcome.requests_made == 3


def test_annotate_exhausted_retries_is_per_doc_failure(tmp_path, byte_tok):
    docs = [Document("d0", "doc a"), Document("d1", "doc b")]

    def transport(url, payload, timeout, headers):
        if "doc a" in payload["messages"][0]["content"]:
            raise ConnectionError("down")
        return {"choices": [{"message": {"content": "fine"}}]}

    outcome = annotate_batch(docs, byte_tok, make_config(tmp_path), transport=transport)
    assert [r.doc_id for r in outcome.records] == ["d1"]
    assert outcome.failures and outcome.failures[0][0] == "d0"


def test_annotate_malformed_response_is_failure(tmp_path, byte_tok):
    docs = [Document("d0", "doc")]
    outcome = annotate_batch(
        docs, byte_tok, make_config(tmp_path), transport=lambda *a: {"nope": True}
    )
    assert outcome.records == []
    assert "malformed" in outcome.failures[0][1]


def test_annotate_overlong_reply_truncated_and_flagged(tmp_path, byte_tok, caplog):
    docs = [Document("d0", "doc")]
    endpoint = FakeEndpoint(lambda p: "one two three four five six")
    with caplog.at_level("WARNING"):
        outcome = annotate_batch(docs, byte_tok, make_config(tmp_path), transport=endpoint)
    assert outcome.records[0].topic == "one two three four"
    assert outcome.records[0].raw == "one two three four five six"
    assert any("truncating" in r.message for r in caplog.records)


def test_cache_file_shape(tmp_path, byte_tok):
    docs = [Document("d0", "cached doc")]
    annotate_batch(docs, byte_tok, make_config(tmp_path), transport=FakeEndpoint(lambda p: "t"))
    (cache_file,) = (tmp_path / "cache").glob("*.json")
    obj = json.loads(cache_file.read_text())
    assert set(obj) == {"doc_id", "prompt_sha256", "raw", "topic"}
    assert cache_file.stem == obj["prompt_sha256"]


def test_topic_table_round_trip(tmp_path, byte_tok):
    docs = [Document(f"d{i}", f"text {i}") for i in range(3)]
    outcome = annotate_batch(
        docs, byte_tok, make_config(tmp_path), transport=FakeEndpoint(lambda p: "some topic")
    )
    save_topic_table(outcome.records, tmp_path / "topics.jsonl")
    table = load_topic_table(tmp_path / "topics.jsonl")
    assert table == {f"d{i}": "some topic" for i in range(3)}
