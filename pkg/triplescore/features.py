"""Vocabulary selection, tf-idf weighting and popularity-bucket sampling shared by
the text scorers.

idf is the smoothed variant idf(w) = ln((1 + N) / (1 + df(w))) + 1 with documents
being persons (one AssociatedText per person).
"""
import logging
import zlib
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from sklearn.preprocessing import normalize

from .errors import ValidationError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Vocabulary:
    """Ordered token list with dense indexes and person-document frequencies

    Attributes
    ----------
    tokens : tuple of str
        retained tokens, most frequent first
    index : dict of str -> int
        token -> column index, dense over 0..V-1
    df : numpy array of int
        number of person-documents containing each token
    n_docs : int
        number of person-documents the vocabulary was built over
    """

    tokens: tuple = ()
    index: dict = field(default_factory=dict)
    df: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    n_docs: int = 0

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self.index

    @property
    def idf(self):
        return np.log((1.0 + self.n_docs) / (1.0 + self.df)) + 1.0

    @classmethod
    def from_arrays(cls, tokens, df, n_docs):
        tokens = tuple(str(t) for t in tokens)
        return cls(
            tokens,
            {t: i for i, t in enumerate(tokens)},
            np.asarray(df, dtype=np.int64),
            int(n_docs),
        )


class TfIdfWeights:
    """Per-token tf-idf weights; tokens outside the vocabulary have no entry"""

    def __init__(self, vocab, values):
        self.vocab = vocab
        self.values = np.asarray(values, dtype=float)

    def __len__(self):
        return len(self.vocab)

    def __contains__(self, token):
        return token in self.vocab

    def get(self, token, default=None):
        i = self.vocab.index.get(token)
        return default if i is None else float(self.values[i])

    def __getitem__(self, token):
        return float(self.values[self.vocab.index[token]])

    def items(self):
        return zip(self.vocab.tokens, self.values.tolist())


@dataclass(frozen=True)
class CandidatePools:
    """Per type: persons having only that type, and persons lacking it"""

    positives: dict = field(default_factory=dict)
    negatives: dict = field(default_factory=dict)

    @property
    def type_ids(self):
        return tuple(sorted(self.positives))


@dataclass(frozen=True)
class SampledExamples:
    """Per type: list of (person, label) with label 1 for positive, 0 for negative"""

    examples: dict = field(default_factory=dict)

    def persons(self, type_id):
        return [p for p, _ in self.examples.get(type_id, ())]

    def labels(self, type_id):
        return np.array([y for _, y in self.examples.get(type_id, ())], dtype=int)


def build_vocabulary(texts, cap=None):
    """Keep the ``cap`` most frequent tokens over a collection of AssociatedText.

    Ranking is by total corpus frequency descending, ties broken by the token
    ascending; ``cap=None`` keeps every token.
    """
    if cap is not None and cap < 1:
        raise ValidationError(f"vocabulary cap must be >= 1, got {cap}")
    texts = list(texts)
    totals = Counter()
    doc_freq = Counter()
    for text in texts:
        totals.update(text.token_counts)
        doc_freq.update(text.token_counts.keys())
    ranked = sorted(totals, key=lambda w: (-totals[w], w))
    if cap is not None:
        ranked = ranked[:cap]
    return Vocabulary.from_arrays(ranked, [doc_freq[w] for w in ranked], len(texts))


def tfidf_vector(doc, vocab):
    """L2-normalized tf-idf row vector (1 x V csr matrix); out-of-vocabulary
    tokens are ignored and an all-out-of-vocabulary document gives a zero row"""
    return tfidf_matrix([doc], vocab)


def tfidf_matrix(docs, vocab, idf=None):
    """stack tfidf_vector rows for several documents into one csr matrix"""
    if idf is None:
        idf = vocab.idf
    rows, cols, vals = [], [], []
    for r, doc in enumerate(docs):
        for token, count in doc.token_counts.items():
            c = vocab.index.get(token)
            if c is not None:
                rows.append(r)
                cols.append(c)
                vals.append(count * idf[c])
    matrix = sparse.csr_matrix(
        (vals, (rows, cols)), shape=(len(docs), len(vocab)), dtype=float
    )
    matrix.sort_indices()
    if matrix.shape[0] == 0 or matrix.shape[1] == 0:
        return matrix
    return normalize(matrix, norm="l2", copy=False)


def corpus_weights(texts, vocab):
    """weight(w) = total count of w in ``texts`` x idf(w), idf over ``texts`` as documents

    Only vocabulary tokens receive a weight; weights are not normalized.
    """
    texts = list(texts)
    totals = np.zeros(len(vocab))
    df = np.zeros(len(vocab))
    for text in texts:
        for token, count in text.token_counts.items():
            i = vocab.index.get(token)
            if i is not None:
                totals[i] += count
                df[i] += 1
    idf = np.log((1.0 + len(texts)) / (1.0 + df)) + 1.0
    return TfIdfWeights(vocab, totals * idf)


def build_candidate_pools(assertions, persons=None):
    """Split KB persons into positive and negative candidates for every type.

    Arguments
    ---------
    assertions : list of KbAssertion
        assertions of one relation
    persons : iterable of str, optional
        restrict pools to these persons (default: every KB person)
    """
    types_of = {}
    for a in assertions:
        types_of.setdefault(a.person, set()).add(a.type)
    if persons is not None:
        keep = set(persons)
        types_of = {p: t for p, t in types_of.items() if p in keep}
    all_types = sorted({t for ts in types_of.values() for t in ts})
    positives, negatives = {}, {}
    for type_id in all_types:
        positives[type_id] = tuple(
            sorted(p for p, ts in types_of.items() if ts == {type_id})
        )
        negatives[type_id] = tuple(
            sorted(p for p, ts in types_of.items() if type_id not in ts)
        )
    return CandidatePools(positives, negatives)


def popularity_bucket(count):
    """bucket index i with count in [2**i, 2**(i+1)), or None for count 0"""
    count = int(count)
    if count < 1:
        return None
    return count.bit_length() - 1


def type_rng(seed, type_id):
    """independent generator per (seed, type) so types can be sampled in any order"""
    return np.random.default_rng([int(seed), zlib.crc32(str(type_id).encode("utf-8"))])


def _bucketize(persons, popularity):
    buckets = {}
    for p in persons:
        pop = popularity.get(p)
        b = popularity_bucket(getattr(pop, "count", pop) or 0)
        if b is not None:
            buckets.setdefault(b, []).append(p)
    return buckets


def sample_examples(pools, popularity, seed, bucket_cap=100):
    """Draw balanced positive/negative examples per popularity bucket.

    For every type and bucket [2**i, 2**(i+1)) at most ``bucket_cap`` positives are
    drawn uniformly without replacement, and the same number of negatives from
    the same bucket. Persons with unknown or zero popularity are never sampled.
    """
    examples = {}
    for type_id in pools.type_ids:
        rng = type_rng(seed, type_id)
        pos_buckets = _bucketize(pools.positives[type_id], popularity)
        neg_buckets = _bucketize(pools.negatives.get(type_id, ()), popularity)
        chosen = []
        for b in sorted(pos_buckets):
            pos = pos_buckets[b]
            neg = neg_buckets.get(b, [])
            n = min(bucket_cap, len(pos))
            if len(neg) < n:
                logger.warning(
                    "type %s bucket %d: only %d negatives for %d positives, "
                    "reducing the draw",
                    type_id,
                    b,
                    len(neg),
                    n,
                )
                n = len(neg)
            if n == 0:
                continue
            pos_draw = rng.choice(len(pos), size=n, replace=False)
            neg_draw = rng.choice(len(neg), size=n, replace=False)
            chosen.extend((pos[i], 1) for i in sorted(pos_draw))
            chosen.extend((neg[i], 0) for i in sorted(neg_draw))
        examples[type_id] = chosen
    return SampledExamples(examples)
