import numpy as np
import pytest

from helpers import random_text
from meco.conditioning import (
    TASK_URLS,
    build_conditional_prompt,
    render_prefix,
    task_url,
    tokenize_document,
)
from meco.documents import Document
from meco.errors import ConfigError, DataError
from meco.urlmeta import MetadataValue, NO_METADATA


def test_prefix_domain_golden():
    assert render_prefix("domain", "en.wikipedia.org") == "URL: en.wikipedia.org\n\n"


def test_prefix_is_byte_exact():
    raw = render_prefix("domain", "a.com").encode("utf-8")
    assert raw == b"URL: a.com\x0a\x0a"


def test_prefix_all_url_kinds_use_url_name():
    for kind in ("domain", "full_url", "suffix", "top_k", "hashed"):
        assert render_prefix(kind, "v").startswith("URL: ")


def test_prefix_topic():
    assert render_prefix("topic", "gaming forum") == "Topic: gaming forum\n\n"


def test_prefix_none_empty():
    assert render_prefix("none", "") == ""


def test_prefix_empty_value_rejected():
    with pytest.raises(DataError):
        render_prefix("domain", "")


def test_tokenize_standard_mask(byte_tok):
    doc = Document("d", "hello")
    td = tokenize_document(doc, NO_METADATA, byte_tok)
    assert td.n_prefix_tokens == 0
    assert td.loss_mask.tolist() == [0] + [1] * (len(td.ids) - 1)
    assert td.ids[0] == byte_tok.spec.bos_id
    assert td.ids[-1] == byte_tok.spec.eos_id


def test_tokenize_prefix_byte_count_oracle(byte_tok):
    # "URL: a.com\n\n" is 12 bytes, so 12 prefix tokens for the byte tokenizer
    doc = Document("d", "body")
    td = tokenize_document(doc, MetadataValue("domain", "a.com"), byte_tok)
    assert len("URL: a.com\n\n".encode("utf-8")) == 12
    assert td.n_prefix_tokens == 12
    assert td.loss_mask.tolist() == [0] * 13 + [1] * (len("body") + 1)


def test_mask_partition_property(byte_tok):
    rng = np.random.default_rng(5)
    for i in range(200):
        doc = Document(f"d{i}", random_text(rng, int(rng.integers(1, 30))))
        value = f"site{i}.example.org"
        td = tokenize_document(doc, MetadataValue("domain", value), byte_tok)
        zeros = np.flatnonzero(td.loss_mask == 0)
        assert zeros.tolist() == list(range(1 + td.n_prefix_tokens))
        assert int(td.loss_mask.sum()) == len(td.ids) - 1 - td.n_prefix_tokens
        # n_prefix_tokens == number of zero bits minus the bos bit
        assert td.n_prefix_tokens == len(zeros) - 1


def test_mask_one_region_decodes_to_body(byte_tok):
    rng = np.random.default_rng(6)
    for i in range(100):
        text = random_text(rng, int(rng.integers(1, 40)))
        doc = Document(f"d{i}", text)
        td = tokenize_document(doc, MetadataValue("domain", "a.com"), byte_tok)
        body_ids = td.ids[td.loss_mask == 1][:-1]  # strip eos
        assert byte_tok.decode(body_ids) == text


def test_standard_and_conditioned_share_body_tokens(byte_tok):
    doc = Document("d", "同じ body text")
    std = tokenize_document(doc, NO_METADATA, byte_tok)
    cond = tokenize_document(doc, MetadataValue("domain", "a.com"), byte_tok)
    assert std.ids[std.loss_mask == 1].tolist() == cond.ids[cond.loss_mask == 1].tolist()


def test_eos_loss_flag(byte_tok):
    doc = Document("d", "x")
    td = tokenize_document(doc, NO_METADATA, byte_tok, eos_loss=False)
    assert td.loss_mask[-1] == 0
    assert td.loss_mask[1] == 1


def test_empty_text_rejected(byte_tok):
    with pytest.raises(DataError):
        tokenize_document(Document("d", ""), NO_METADATA, byte_tok)


def test_conditional_prompt_fabricated_url():
    out = build_conditional_prompt("www.factquizmaster.com", "Q: which planet is red?")
    assert out == "URL: www.factquizmaster.com\n\nQ: which planet is red?"


def test_conditional_prompt_empty_prompt():
    assert build_conditional_prompt("en.wikipedia.org", "") == "URL: en.wikipedia.org\n\n"


def test_conditional_prompt_accepts_any_url_unchanged():
    fabricated = "totally.made.up.domain.example"
    assert fabricated in build_conditional_prompt(fabricated, "x")


def test_task_url_registry():
    assert task_url("openbookqa") == "www.factquizmaster.com"
    assert task_url("social_iqa") == "www.socialskillsassessment.com"
    assert task_url("mmlu") == "www.testprepportal.com"
    assert task_url("truthfulqa") == "www.factcheckfun.com"
    assert len(TASK_URLS) == 10


def test_task_url_unknown_lists_known():
    with pytest.raises(ConfigError) as exc:
        task_url("nonexistent")
    assert "openbookqa" in str(exc.value)
