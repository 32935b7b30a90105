"""
Unit and regression test for the accuracy-weighted ensemble.
"""

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from triplescore.corpus import GoldTriple, KbAssertion, ScoredTriple, TargetRelation
from triplescore.ensemble import EnsembleWeights, TripleScoreVector, combine, derive_weights
from triplescore.errors import ValidationError

PROF = TargetRelation.PROFESSION
SCORERS = ("wordclass", "wordcount", "wordmle", "pathrank")


def _vector(**scores):
    return TripleScoreVector("e1", PROF, "Actor", scores)


def _weights(**acc):
    return EnsembleWeights({PROF: acc})


def test_agreeing_scorers():
    weights = _weights(wordclass=0.7, wordcount=0.5, wordmle=0.6, pathrank=0.9)
    assert combine(_vector(wordclass=5, wordcount=5, wordmle=5, pathrank=5), weights) == 5


def test_two_scorer_hand_example():
    assert combine(_vector(wordclass=7, wordcount=0), _weights(wordclass=0.8, wordcount=0.6)) == 4
    # 7 * 0.74 / 1.46 = 3.548
    assert combine(_vector(wordclass=7, wordcount=0), _weights(wordclass=0.74, wordcount=0.72)) == 3


def test_abstentions():
    weights = _weights(wordclass=0.8, wordcount=0.6)
    assert combine(_vector(wordclass=None, wordcount=None), weights) == 0
    assert combine(_vector(), weights) == 0
    assert combine(_vector(wordclass=None, wordcount=2), weights) == 2


def test_zero_accuracy_participants_average_equally():
    weights = _weights(wordclass=0.0, wordcount=0.0, wordmle=0.9)
    assert combine(_vector(wordclass=6, wordcount=3, wordmle=None), weights) == 4


def test_combine_errors():
    with pytest.raises(ValidationError):
        combine(_vector(wordclass=3, pathrank=4), _weights(wordclass=0.5))
    with pytest.raises(ValidationError):
        combine(_vector(wordclass=9), _weights(wordclass=0.5))


def test_combine_matches_fraction_oracle():
    rng = np.random.default_rng(17)
    for _ in range(1000):
        acc = {s: round(float(rng.uniform(0.05, 1.0)), 2) for s in SCORERS}
        scores = {s: (None if rng.random() < 0.3 else int(rng.integers(0, 8))) for s in SCORERS}
        present = {s: v for s, v in scores.items() if v is not None}
        if present:
            total = sum(Fraction(acc[s]) for s in present)
            expected = math.floor(sum(Fraction(acc[s]) * v for s, v in present.items()) / total)
        else:
            expected = 0
        assert combine(_vector(**scores), _weights(**acc)) == expected


score_or_abstain = st.one_of(st.none(), st.integers(0, 7))


@settings(derandomize=True, max_examples=200)
@given(
    scores=st.lists(score_or_abstain, min_size=4, max_size=4),
    acc=st.lists(st.floats(0.01, 1.0), min_size=4, max_size=4),
    order=st.permutations(range(4)),
)
def test_combine_is_bounded_and_order_free(scores, acc, order):
    vec = _vector(**dict(zip(SCORERS, scores)))
    weights = _weights(**dict(zip(SCORERS, acc)))
    result = combine(vec, weights)
    present = [v for v in scores if v is not None]
    if present:
        assert min(present) <= result <= max(present)
    else:
        assert result == 0
    shuffled = _vector(**{SCORERS[i]: scores[i] for i in order})
    assert combine(shuffled, weights) == result


def _dev_pairs(predicted, gold):
    pairs = []
    for i, (p, g) in enumerate(zip(predicted, gold)):
        assertion = KbAssertion(f"e{i}", PROF, "Actor")
        pairs.append((ScoredTriple(f"e{i}", PROF, "Actor", p), GoldTriple(assertion, g)))
    return pairs


def test_derive_weights():
    gold = [7, 5, 0, 2]
    weights = derive_weights(
        {
            "wordclass": _dev_pairs([7, 5, 0, 2], gold),
            "wordcount": _dev_pairs([0, 5, 0, None], gold),
        }
    )
    assert weights.for_relation("profession") == {"wordclass": 1.0, "wordcount": pytest.approx(2 / 3)}
    assert weights.as_dict()["profession"]["wordclass"] == 1.0
    assert EnsembleWeights.from_dict(weights.as_dict()).as_dict() == weights.as_dict()


def test_derive_weights_skips_abstentions(caplog):
    gold = [7, 5]
    weights = derive_weights(
        {
            "wordclass": _dev_pairs([7, None], gold),
            "pathrank": _dev_pairs([None, None], gold),
        }
    )
    assert weights.for_relation(PROF) == {"pathrank": 0.0, "wordclass": 1.0}
    assert "abstained on every profession dev triple" in caplog.text


def test_derive_weights_errors():
    with pytest.raises(ValidationError):
        derive_weights({})
    with pytest.raises(ValidationError):
        derive_weights({"wordclass": _dev_pairs([0, 0], [7, 7])})


def test_weights_from_dict_rejects_bad_values():
    with pytest.raises(ValidationError):
        EnsembleWeights.from_dict({"profession": {"wordclass": 1.5}})
    with pytest.raises(ValidationError):
        EnsembleWeights.from_dict({"profession": {"wordclass": 0.0, "wordcount": 0.0}})
    with pytest.raises(ValidationError):
        EnsembleWeights.from_dict({"religion": {"wordclass": 0.5}})
