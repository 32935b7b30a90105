"""Map raw base-scorer outputs to integer triple scores 0-7.

    maplin    floor(s / s_max * 7)
    maplog    floor(max(0, log2(s / s_max * 2**7)))
    mapscale  floor(s * 8 - 1e-4)                  (probabilities only)

s_max is the highest raw value the same scorer gives any candidate type of the
same person; abstained candidates are excluded. Every result is clamped to 0..7.
"""
import logging
import math
from enum import Enum

from .corpus import MAX_SCORE, MIN_SCORE, TargetRelation
from .errors import ValidationError
from .scorer_driver import PROBABILITY

logger = logging.getLogger(__name__)

SCALE_EPSILON = 1e-4


class MappingStrategy(str, Enum):
    MAPLIN = "maplin"
    MAPLOG = "maplog"
    MAPSCALE = "mapscale"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ValidationError(
                f"unknown mapping strategy '{value}', expected maplin, maplog or mapscale"
            ) from None


def _clamp(value):
    return max(MIN_SCORE, min(MAX_SCORE, int(value)))


def _check_range(s, s_max):
    if s < 0 or s_max < 0:
        raise ValidationError(f"raw values must be non-negative, got s={s}, s_max={s_max}")
    if s > s_max:
        raise ValidationError(f"s={s} exceeds s_max={s_max}")


def map_linear(s, s_max):
    _check_range(s, s_max)
    if s_max == 0:
        return 0
    return _clamp(math.floor(s / s_max * 7))


def map_log(s, s_max):
    _check_range(s, s_max)
    if s == 0 or s_max == 0:
        return 0
    return _clamp(math.floor(max(0.0, math.log2(s / s_max * 2**7))))


def map_scale(s):
    if not 0.0 <= s <= 1.0:
        raise ValidationError(f"mapscale needs a probability, got {s}")
    return _clamp(math.floor(s * 8 - SCALE_EPSILON))


def apply_strategy(strategy, s, s_max, kind):
    strategy = MappingStrategy.parse(strategy)
    if strategy is MappingStrategy.MAPSCALE:
        if kind != PROBABILITY:
            raise ValidationError("mapscale applies to probability scores only")
        return map_scale(s)
    if strategy is MappingStrategy.MAPLIN:
        return map_linear(s, s_max)
    return map_log(s, s_max)


# default strategies per (scorer, relation): the choices that scored best on the
# development triples
DEFAULT_TABLE = {
    ("wordclass", TargetRelation.PROFESSION): MappingStrategy.MAPSCALE,
    ("wordclass", TargetRelation.NATIONALITY): MappingStrategy.MAPLOG,
    ("wordcount", TargetRelation.PROFESSION): MappingStrategy.MAPLIN,
    ("wordcount", TargetRelation.NATIONALITY): MappingStrategy.MAPLIN,
    ("wordmle", TargetRelation.PROFESSION): MappingStrategy.MAPLOG,
    ("wordmle", TargetRelation.NATIONALITY): MappingStrategy.MAPLOG,
    ("pathrank", TargetRelation.PROFESSION): MappingStrategy.MAPSCALE,
    ("pathrank", TargetRelation.NATIONALITY): MappingStrategy.MAPLOG,
}


class MappingTable:
    """(scorer, relation) -> MappingStrategy, total over the 4 x 2 grid"""

    def __init__(self, table=None):
        self.table = dict(DEFAULT_TABLE)
        if table:
            for (scorer, relation), strategy in table.items():
                self.table[(scorer, TargetRelation.parse(relation))] = MappingStrategy.parse(
                    strategy
                )

    @classmethod
    def from_overrides(cls, overrides):
        """build from config keys of the form ``scorer.relation = strategy``"""
        table = {}
        for key, strategy in overrides.items():
            try:
                scorer, relation = key.split(".")
            except ValueError:
                raise ValidationError(
                    f"mapping override '{key}' must look like scorer.relation"
                ) from None
            table[(scorer.strip().lower(), relation)] = strategy
        return cls(table)

    def strategy(self, scorer, relation):
        return self.table[(scorer, TargetRelation.parse(relation))]

    def as_dict(self):
        return {
            f"{scorer}.{relation.value}": strategy.value
            for (scorer, relation), strategy in sorted(
                self.table.items(), key=lambda kv: (kv[0][0], kv[0][1].value)
            )
        }


def map_scores(raw_scores, strategy):
    """Map a dict (person, type) -> RawScore to (person, type) -> int or None.

    s_max is taken per person over the non-abstained entries of ``raw_scores``,
    which therefore must contain every candidate type of each person.
    """
    strategy = MappingStrategy.parse(strategy)
    s_max = {}
    for (person, _), raw in raw_scores.items():
        if not raw.abstained:
            s_max[person] = max(s_max.get(person, 0.0), raw.value)
    mapped = {}
    for (person, type_id), raw in raw_scores.items():
        if raw.abstained:
            mapped[(person, type_id)] = None
        else:
            mapped[(person, type_id)] = apply_strategy(
                strategy, raw.value, s_max[person], raw.kind
            )
    return mapped


def select_strategies(dev_raw_scores, gold, relation, acc_fn):
    """Pick, per scorer, the strategy with the highest development accuracy.

    Arguments
    ---------
    dev_raw_scores : dict of scorer name -> dict (person, type) -> RawScore
    gold : dict of (person, type) -> int
    acc_fn : callable
        accuracy over a list of (pred, gold) pairs

    Returns
    -------
    dict of scorer name -> MappingStrategy; ties keep the order maplin, maplog, mapscale
    """
    relation = TargetRelation.parse(relation)
    chosen = {}
    for scorer, raw_scores in sorted(dev_raw_scores.items()):
        kinds = {r.kind for r in raw_scores.values()}
        best = None
        for strategy in MappingStrategy:
            if strategy is MappingStrategy.MAPSCALE and kinds != {PROBABILITY}:
                continue
            mapped = map_scores(raw_scores, strategy)
            pairs = [(s, gold[k]) for k, s in mapped.items() if s is not None and k in gold]
            if not pairs:
                continue
            acc = acc_fn(pairs)
            if best is None or acc > best[0]:
                best = (acc, strategy)
        if best is None:
            chosen[scorer] = DEFAULT_TABLE[(scorer, relation)]
            logger.warning("no development pairs for %s, keeping default mapping", scorer)
        else:
            chosen[scorer] = best[1]
    return chosen
