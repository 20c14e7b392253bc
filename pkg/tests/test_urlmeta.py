import re
from collections import Counter

import pytest

from meco.documents import Document
from meco.errors import ConfigError, DataError
from meco.urlmeta import (
    MetadataSpec,
    UrlVocab,
    build_url_vocab,
    extract_metadata,
    hash_domain,
    parse_url,
    scan_hash_collisions,
    vocab_coverage,
)

KEY = bytes(range(16))


def test_parse_wikipedia_example():
    parts = parse_url("https://en.wikipedia.org/wiki/Bill_Gates")
    assert parts.host == "en.wikipedia.org"
    assert parts.path == "/wiki/Bill_Gates"
    assert parts.scheme == "https"


def test_parse_schemeless():
    parts = parse_url("en.wikipedia.org")
    assert parts.host == "en.wikipedia.org"
    assert parts.path == ""


def test_parse_lowercases_and_strips_port():
    # oracle: urllib's standards-conformant split agrees on the hostname
    from urllib.parse import urlsplit

    raw = "http://WWW.Example.COM:8080/a"
    assert parse_url(raw).host == urlsplit(raw).hostname == "www.example.com"


def test_parse_strips_userinfo_and_query():
    parts = parse_url("https://user:pw@Host.Org:443/p/q?x=1#frag")
    assert parts.host == "host.org"
    assert parts.path == "/p/q"


def test_parse_no_host_is_error():
    for raw in ["/only/a/path", "   ", "???"]:
        with pytest.raises(DataError):
            parse_url(raw)


def _doc(url=None, doc_id="d0"):
    return Document(doc_id, "body text", url=url)


def test_extract_domain_example():
    meta = extract_metadata(_doc("https://en.wikipedia.org/wiki/Bill_Gates"), MetadataSpec("domain"))
    assert meta.kind == "domain"
    assert meta.value == "en.wikipedia.org"


def test_extract_full_url_strips_query():
    meta = extract_metadata(
        _doc("https://en.wikipedia.org/wiki/Bill_Gates?x=1"), MetadataSpec("full_url")
    )
    assert meta.value == "en.wikipedia.org/wiki/Bill_Gates"


def test_extract_suffix():
    meta = extract_metadata(_doc("https://en.wikipedia.org/a"), MetadataSpec("suffix"))
    assert meta.value == "org"
    assert "." not in meta.value


def test_extract_top_k_retained_and_unknown():
    vocab = UrlVocab(domains={"en.wikipedia.org": 5, "rare.net": 1}, total=6, retained_fraction=0.5)
    hit = extract_metadata(_doc("https://en.wikipedia.org/a"), MetadataSpec("top_k"), vocab=vocab)
    miss = extract_metadata(_doc("https://rare.net/a"), MetadataSpec("top_k"), vocab=vocab)
    assert hit.value == "en.wikipedia.org"
    assert miss.value == "unknown"


def test_extract_top_k_without_vocab_is_config_error():
    with pytest.raises(ConfigError):
        extract_metadata(_doc("https://a.com"), MetadataSpec("top_k"))


def test_extract_hashed_requires_key():
    with pytest.raises(ConfigError):
        extract_metadata(_doc("https://a.com"), MetadataSpec("hashed"))


def test_extract_no_url_degrades_to_none():
    meta = extract_metadata(_doc(None), MetadataSpec("domain"))
    assert meta.kind == "none"


def test_extract_unparseable_url_degrades_to_none():
    meta = extract_metadata(_doc("///nope"), MetadataSpec("domain"))
    assert meta.kind == "none"


def test_extract_topic_lookup_and_miss():
    topics = {"d0": "gaming forum"}
    hit = extract_metadata(_doc(None, "d0"), MetadataSpec("topic"), topics=topics)
    assert (hit.kind, hit.value) == ("topic", "gaming forum")
    misses = []
    miss = extract_metadata(_doc(None, "d1"), MetadataSpec("topic"), topics=topics,
                            on_miss=misses.append)
    assert miss.kind == "none"
    assert misses and "d1" in misses[0]


def test_extract_is_pure():
    doc = _doc("https://a.com/x")
    spec = MetadataSpec("domain")
    assert extract_metadata(doc, spec) == extract_metadata(doc, spec)


# --- vocabulary -----------------------------------------------------------


def test_vocab_single_domain_full_coverage():
    docs = [_doc("https://a.com/1", f"d{i}") for i in range(4)]
    vocab = build_url_vocab(docs, 0.5)
    assert vocab.retained == {"a.com"}
    assert vocab.coverage == 1.0


def test_vocab_two_domain_90_10():
    docs = [_doc("https://big.com/x", f"b{i}") for i in range(90)]
    docs += [_doc("https://tiny.org/x", f"t{i}") for i in range(10)]
    vocab = build_url_vocab(docs, 0.5)
    retained, coverage = vocab_coverage(vocab, 0.5)
    assert retained == 1
    assert coverage == 0.9


def test_vocab_zipf_counts_match_brute_force(zipf_corpus):
    docs, vocab = zipf_corpus
    # independent recount straight off the documents
    expected = Counter()
    for d in docs:
        if d.url:
            host = d.url.split("//")[1].split("/")[0].lower()
            expected[host] += 1
    assert vocab.domains == dict(expected)
    k = vocab.retained_size(vocab.retained_fraction)
    top = set(sorted(expected, key=lambda d: (-expected[d], d))[:k])
    assert vocab.retained == top
    covered = sum(expected[d] for d in top)
    assert vocab.coverage == covered / vocab.total


def test_vocab_coverage_monotone(zipf_corpus):
    _, vocab = zipf_corpus
    fractions = [0.01, 0.05, 0.1, 0.25, 0.5, 0.75, 1.0]
    coverages = [vocab_coverage(vocab, f)[1] for f in fractions]
    assert all(a <= b for a, b in zip(coverages, coverages[1:]))


def test_vocab_coverage_identity_integer_arithmetic(zipf_corpus):
    _, vocab = zipf_corpus
    assert vocab.coverage == vocab.retained_doc_count / vocab.total


def test_vocab_full_fraction_counts_only_url_docs():
    docs = [_doc("https://a.com/1", "u0"), _doc("https://b.com/1", "u1"), _doc(None, "n0")]
    vocab = build_url_vocab(docs, 1.0)
    _, coverage = vocab_coverage(vocab, 1.0)
    assert coverage == pytest.approx(2 / 3)


def test_vocab_fraction_out_of_range(zipf_corpus):
    _, vocab = zipf_corpus
    for f in (0.0, -0.1, 1.5):
        with pytest.raises(ConfigError):
            vocab_coverage(vocab, f)


def test_vocab_json_round_trip(zipf_corpus, tmp_path):
    _, vocab = zipf_corpus
    vocab.save(tmp_path / "vocab.json")
    back = UrlVocab.load(tmp_path / "vocab.json")
    assert back.domains == vocab.domains
    assert back.retained == vocab.retained
    assert back.total == vocab.total


def test_vocab_tie_break_lexicographic():
    docs = [_doc("https://bbb.com/x", "d0"), _doc("https://aaa.com/x", "d1")]
    vocab = build_url_vocab(docs, 0.5)
    assert vocab.retained == {"aaa.com"}


@pytest.fixture(scope="module")
def zipf_corpus():
    import numpy as np

    rng = np.random.default_rng(11)
    docs = []
    for i in range(10_000):
        rank = min(int(rng.zipf(1.3)), 400) - 1
        url = f"https://site{rank}.example.net/p/{i}" if rng.random() < 0.97 else None
        docs.append(Document(f"d{i}", "t", url=url))
    vocab = build_url_vocab(docs, 0.05)
    return docs, vocab


# --- hashed urls ----------------------------------------------------------


def test_hash_deterministic():
    assert hash_domain("en.wikipedia.org", KEY) == hash_domain("en.wikipedia.org", KEY)


def test_hash_format_shape():
    pattern = re.compile(r"^[a-z0-9]{8}-[a-z0-9]{4}$")
    for d in ["en.wikipedia.org", "a.com", "x" * 60 + ".org"]:
        assert pattern.match(hash_domain(d, KEY)), hash_domain(d, KEY)


def test_hash_key_changes_output():
    assert hash_domain("a.com", KEY) != hash_domain("a.com", bytes(16))


def test_hash_no_collisions_over_10k_domains():
    domains = [f"host{i}.example.org" for i in range(10_000)]
    assert scan_hash_collisions(domains, KEY) == []
    assert len({hash_domain(d, KEY) for d in domains}) == 10_000


def test_hash_rejects_bad_key():
    with pytest.raises(ConfigError):
        hash_domain("a.com", b"short")
