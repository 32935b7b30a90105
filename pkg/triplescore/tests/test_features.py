"""
Unit and regression test for vocabulary, tf-idf and example sampling.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from triplescore.corpus import AssociatedText, KbAssertion, Popularity, TargetRelation
from triplescore.errors import ValidationError
from triplescore.features import (
    build_candidate_pools,
    build_vocabulary,
    corpus_weights,
    popularity_bucket,
    sample_examples,
    tfidf_matrix,
    tfidf_vector,
)
from triplescore.text_scorers import train_word_classification

doc1 = AssociatedText("p1", {"a": 3, "b": 1})
doc2 = AssociatedText("p2", {"a": 1, "c": 5})


def test_vocabulary_cap():
    vocab = build_vocabulary([doc1, doc2], cap=2)
    assert vocab.tokens == ("c", "a")
    assert list(vocab.df) == [1, 2]
    assert vocab.n_docs == 2


def test_vocabulary_keeps_all_and_breaks_ties():
    vocab = build_vocabulary([doc1, doc2], cap=10)
    assert set(vocab.tokens) == {"a", "b", "c"}
    tied = build_vocabulary([AssociatedText("p", {"zeta": 4, "alpha": 4})], cap=1)
    assert tied.tokens == ("alpha",)
    with pytest.raises(ValidationError):
        build_vocabulary([doc1], cap=0)


def test_tfidf_hand_example():
    docs = [AssociatedText("p1", {"a": 2, "b": 1}), AssociatedText("p2", {"a": 1})]
    vocab = build_vocabulary(docs)
    x = tfidf_vector(docs[0], vocab).toarray()[0]
    idf_b = np.log(3 / 2) + 1
    norm = np.sqrt(4 + idf_b**2)
    assert np.isclose(x[vocab.index["a"]], 2 / norm)
    assert np.isclose(x[vocab.index["b"]], idf_b / norm)
    assert np.allclose(x[[vocab.index["a"], vocab.index["b"]]], [0.818, 0.575], atol=1e-3)


def test_tfidf_unit_and_empty_vectors():
    vocab = build_vocabulary([doc1, doc2])
    single = tfidf_vector(AssociatedText("q", {"b": 5}), vocab).toarray()[0]
    assert np.isclose(np.linalg.norm(single), 1.0)
    assert np.isclose(single[vocab.index["b"]], 1.0)
    empty = tfidf_vector(AssociatedText("q", {}), vocab).toarray()[0]
    assert np.all(empty == 0)


def test_corpus_weights():
    everywhere = [AssociatedText(f"p{i}", {"w": 2}) for i in range(3)]
    weights = corpus_weights(everywhere, build_vocabulary(everywhere))
    assert np.isclose(weights["w"], 6.0)

    docs = [AssociatedText("p1", {"w": 4}), AssociatedText("p2", {"x": 1}), AssociatedText("p3", {"x": 1})]
    weights = corpus_weights(docs, build_vocabulary(docs))
    assert np.isclose(weights["w"], 4 * (np.log(2) + 1))
    assert np.isclose(weights["w"], 6.773, atol=1e-3)
    assert weights.get("absent") is None


def test_popularity_bucket():
    assert popularity_bucket(0) is None
    assert popularity_bucket(1) == 0
    assert popularity_bucket(3) == 1
    assert popularity_bucket(4) == 2
    assert popularity_bucket(1023) == 9


def _pools(n_pos, n_neg):
    assertions = [KbAssertion(f"pos{i:04d}", TargetRelation.PROFESSION, "Actor") for i in range(n_pos)]
    assertions += [KbAssertion(f"neg{i:04d}", TargetRelation.PROFESSION, "Farmer") for i in range(n_neg)]
    persons = [a.person for a in assertions]
    popularity = {p: Popularity(p, 5) for p in persons}
    return build_candidate_pools(assertions), popularity


def test_candidate_pools_only_single_type_persons():
    assertions = [
        KbAssertion("e1", TargetRelation.PROFESSION, "Actor"),
        KbAssertion("e2", TargetRelation.PROFESSION, "Actor"),
        KbAssertion("e2", TargetRelation.PROFESSION, "Singer"),
        KbAssertion("e3", TargetRelation.PROFESSION, "Singer"),
    ]
    pools = build_candidate_pools(assertions)
    assert pools.positives["Actor"] == ("e1",)
    assert pools.negatives["Actor"] == ("e3",)
    assert pools.positives["Singer"] == ("e3",)


def test_sample_takes_all_small_buckets():
    pools, popularity = _pools(40, 500)
    examples = sample_examples(pools, popularity, seed=1)
    labels = examples.labels("Actor")
    assert labels.sum() == 40 and (labels == 0).sum() == 40


def test_sample_caps_large_buckets():
    pools, popularity = _pools(300, 500)
    examples = sample_examples(pools, popularity, seed=1, bucket_cap=100)
    assert examples.labels("Actor").sum() == 100
    assert (examples.labels("Actor") == 0).sum() == 100


def test_sample_is_deterministic():
    pools, popularity = _pools(300, 500)
    first = sample_examples(pools, popularity, seed=7)
    second = sample_examples(pools, popularity, seed=7)
    assert first.examples == second.examples
    other = sample_examples(pools, popularity, seed=8)
    assert other.examples != first.examples


token_counts = st.dictionaries(st.sampled_from(list("abcdefghij")), st.integers(1, 20), max_size=8)
corpora = st.lists(token_counts, min_size=1, max_size=6).map(
    lambda bags: [AssociatedText(f"p{i}", bag) for i, bag in enumerate(bags)]
)


@settings(derandomize=True, max_examples=200)
@given(texts=corpora, cap=st.integers(1, 12))
def test_capped_vocabulary_is_a_prefix(texts, cap):
    full = build_vocabulary(texts)
    capped = build_vocabulary(texts, cap)
    assert capped.tokens == full.tokens[:cap]
    assert list(capped.df) == list(full.df[:cap])
    assert capped.n_docs == full.n_docs == len(texts)


@settings(derandomize=True, max_examples=200)
@given(texts=corpora, doc=token_counts)
def test_tfidf_norm_is_zero_or_one(texts, doc):
    vocab = build_vocabulary(texts)
    norm = np.linalg.norm(tfidf_vector(AssociatedText("q", doc), vocab).toarray())
    assert np.isclose(norm, 0.0) or np.isclose(norm, 1.0)
    assert np.isclose(norm, 0.0) == (not any(w in vocab for w in doc))


@settings(derandomize=True, max_examples=500)
@given(count=st.integers(1, 10**12))
def test_bucket_holds_its_count(count):
    i = popularity_bucket(count)
    assert 2**i <= count < 2 ** (i + 1)


def test_tfidf_matrix_without_documents():
    vocab = build_vocabulary([doc1, doc2])
    assert tfidf_matrix([], vocab).shape == (0, len(vocab))


def _skewed_pools(neg_popularity):
    assertions = [KbAssertion(f"pos{i}", TargetRelation.PROFESSION, "Actor") for i in range(3)]
    assertions += [KbAssertion(f"neg{i}", TargetRelation.PROFESSION, "Farmer") for i in range(5)]
    popularity = {f"pos{i}": Popularity(f"pos{i}", 1) for i in range(3)}
    popularity.update({f"neg{i}": Popularity(f"neg{i}", c) for i, c in enumerate(neg_popularity)})
    return build_candidate_pools(assertions), popularity


def test_sample_reduces_draw_to_available_negatives():
    pools, popularity = _skewed_pools([1, 8, 8, 8, 8])
    examples = sample_examples(pools, popularity, seed=0)
    labels = examples.labels("Actor")
    assert labels.sum() == 1 and (labels == 0).sum() == 1
    assert examples.persons("Actor")[1] == "neg0"


def test_type_without_same_bucket_negatives_is_untrainable():
    pools, popularity = _skewed_pools([8, 8, 8, 8, 8])
    examples = sample_examples(pools, popularity, seed=0)
    assert examples.examples["Actor"] == []
    texts = {p: AssociatedText(p, {"film" if p.startswith("pos") else "farm": 2}) for p in popularity}
    model = train_word_classification(examples, texts, build_vocabulary(texts.values()), cv_grid=[1.0])
    assert "Actor" in model.untrainable
    assert "Actor" not in model.classifiers
