"""Accuracy-weighted averaging of the base scorers' integer scores.

For a triple t scored by the participating (non-abstaining) scorers M_t,

    S(t) = floor( sum_i ACC_i * s_i(t) / sum_j ACC_j ),   i, j in M_t

and S(t) = 0 when every scorer abstains. The sums are evaluated in exact rational
arithmetic so the floor never suffers from rounding.
"""
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction

from .corpus import TargetRelation
from .errors import ValidationError
from .evalharness import metric_acc

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EnsembleWeights:
    """relation -> scorer -> development ACC in [0, 1]"""

    acc: dict = field(default_factory=dict)

    def for_relation(self, relation):
        return self.acc.get(TargetRelation.parse(relation), {})

    def as_dict(self):
        return {
            relation.value: dict(sorted(scorers.items()))
            for relation, scorers in sorted(self.acc.items(), key=lambda kv: kv[0].value)
        }

    @classmethod
    def from_dict(cls, raw):
        acc = {}
        for relation, scorers in raw.items():
            values = {str(s): float(v) for s, v in scorers.items()}
            for scorer, v in values.items():
                if not 0.0 <= v <= 1.0:
                    raise ValidationError(f"ACC weight of {scorer} is {v}, outside [0, 1]")
            if values and not any(v > 0 for v in values.values()):
                raise ValidationError(f"all ensemble weights are zero for {relation}")
            acc[TargetRelation.parse(relation)] = values
        return cls(acc)


@dataclass(frozen=True)
class TripleScoreVector:
    """per scorer: integer score 0-7, or None when the scorer abstained"""

    person: str
    relation: TargetRelation
    type: str
    scores: dict = field(default_factory=dict)

    @property
    def key(self):
        return (self.person, self.type)

    def participants(self):
        return {s: v for s, v in self.scores.items() if v is not None}


def combine(vec, weights):
    """ACC-weighted floor average over the scorers that produced a score

    Participating scorers whose ACC are all zero are averaged with equal weights.
    """
    present = vec.participants()
    if not present:
        return 0
    acc = weights.for_relation(vec.relation)
    missing = [s for s in present if s not in acc]
    if missing:
        raise ValidationError(f"no ensemble weight for scorer(s) {', '.join(sorted(missing))}")
    for s, v in present.items():
        if not 0 <= v <= 7:
            raise ValidationError(f"score {v} of {s} outside 0..7")
    w = {s: Fraction(acc[s]) for s in present}
    total = sum(w.values())
    if total == 0:
        w = {s: Fraction(1) for s in present}
        total = Fraction(len(present))
    value = sum(w[s] * present[s] for s in present) / total
    return int(math.floor(value))


def derive_weights(dev_scores, acc_fn=metric_acc):
    """Development ACC of every scorer per relation.

    Arguments
    ---------
    dev_scores : dict of scorer name -> list of (ScoredTriple, GoldTriple)
        abstained predictions (score None) are left out of a scorer's ACC
    acc_fn : callable
        accuracy over (pred, gold) pairs; the evaluation ACC by default

    Raises
    ------
    ValidationError
        if a relation has no development pair at all, or every scorer has ACC 0
    """
    grouped = {}
    for scorer, pairs in dev_scores.items():
        for predicted, gold in pairs:
            relation = TargetRelation.parse(gold.assertion.relation)
            grouped.setdefault(relation, {}).setdefault(scorer, [])
            if predicted.score is not None:
                grouped[relation][scorer].append((int(predicted.score), gold.score))
    if not grouped:
        raise ValidationError("no development pairs to derive ensemble weights from")
    acc = {}
    for relation, per_scorer in grouped.items():
        values = {}
        for scorer, pairs in sorted(per_scorer.items()):
            if pairs:
                values[scorer] = float(acc_fn(pairs))
            else:
                logger.warning("%s abstained on every %s dev triple, ACC 0", scorer, relation.value)
                values[scorer] = 0.0
        if not any(v > 0 for v in values.values()):
            raise ValidationError(
                f"every scorer has ACC 0 on the {relation.value} dev set, weights undefined"
            )
        acc[relation] = values
    return EnsembleWeights(acc)
