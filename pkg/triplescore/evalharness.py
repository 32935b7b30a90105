"""Evaluation metrics and a deterministic synthetic world generator.

ACC   fraction of triples whose predicted score is within ``tolerance`` of gold
ASD   mean absolute score difference
TAU   per (person, relation) group, a normalized Kendall tau distance between the
      predicted and gold orderings, averaged over the groups with unweighted mean
"""
import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .corpus import GoldTriple, KbAssertion, ScoredTriple, TargetRelation, write_kb
from .errors import ValidationError
from .trigger import base_term

logger = logging.getLogger(__name__)


def _check_pairs(pairs):
    pairs = list(pairs)
    if not pairs:
        raise ValidationError("metrics need at least one (prediction, gold) pair")
    return pairs


def metric_acc(pairs, tolerance=2):
    pairs = _check_pairs(pairs)
    return sum(1 for p, g in pairs if abs(p - g) <= tolerance) / len(pairs)


def metric_asd(pairs):
    pairs = _check_pairs(pairs)
    return sum(abs(p - g) for p, g in pairs) / len(pairs)


def kendall_tau_distance(pairs):
    """Normalized tau distance of one group, or None when every gold pair is tied.

    A pair ordered by gold counts 1 when the prediction reverses it and 1/2 when
    the prediction ties it; the sum is divided by the number of gold-ordered pairs.
    """
    penalty = 0.0
    ordered = 0
    for i in range(len(pairs)):
        for j in range(i + 1, len(pairs)):
            dg = pairs[i][1] - pairs[j][1]
            if dg == 0:
                continue
            ordered += 1
            dp = pairs[i][0] - pairs[j][0]
            if dp == 0:
                penalty += 0.5
            elif (dp > 0) != (dg > 0):
                penalty += 1.0
    if ordered == 0:
        return None
    return penalty / ordered


def _tau_groups(grouped, min_group):
    distances = []
    for key in sorted(grouped, key=str):
        pairs = list(grouped[key])
        if len(pairs) < min_group:
            continue
        d = kendall_tau_distance(pairs)
        if d is not None:
            distances.append(d)
    return distances


def metric_tau(grouped, min_group=2):
    """Mean tau distance over groups with at least ``min_group`` triples

    Arguments
    ---------
    grouped : dict of (person, relation) -> list of (pred, gold)

    Raises
    ------
    ValidationError
        if no group is eligible
    """
    distances = _tau_groups(grouped, min_group)
    if not distances:
        raise ValidationError(f"no group with {min_group}+ triples and distinct gold scores")
    return float(np.mean(distances))


@dataclass(frozen=True)
class MetricsReport:
    """ACC, ASD and TAU of one prediction set

    Attributes
    ----------
    acc : float
        in [0, 1], higher is better
    asd : float
        >= 0, lower is better
    tau : float
        in [0, 1], lower is better
    n_triples : int
        number of evaluated triples
    n_rank_groups : int
        number of (person, relation) groups that entered TAU
    """

    acc: float
    asd: float
    tau: float
    n_triples: int
    n_rank_groups: int

    def __post_init__(self):
        for name in ("acc", "asd", "tau"):
            if not math.isfinite(getattr(self, name)):
                raise ValidationError(f"{name} is not finite")
        if not (0.0 <= self.acc <= 1.0 and 0.0 <= self.tau <= 1.0 and self.asd >= 0.0):
            raise ValidationError("metric outside its range")

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def format_table(self, title=None):
        lines = []
        if title:
            lines.append(title)
        lines.append(f"{'ACC':>8} {'ASD':>8} {'TAU':>8} {'triples':>8} {'groups':>8}")
        lines.append(
            f"{self.acc:8.4f} {self.asd:8.4f} {self.tau:8.4f} {self.n_triples:8d} {self.n_rank_groups:8d}"
        )
        return "\n".join(lines)


def comparable_subset(*predictions):
    """(person, type) keys scored (not abstained) in every prediction list"""
    keys = None
    for triples in predictions:
        scored = {t.key for t in triples if t.score is not None}
        keys = scored if keys is None else keys & scored
    return keys or set()


def evaluate(predictions, gold, allow_missing=False, subset=None, tolerance=2, min_group=2):
    """Score predictions against gold triples.

    Arguments
    ---------
    predictions : list of ScoredTriple
    gold : list of GoldTriple
    allow_missing : bool
        score a gold triple without prediction (or with an abstention) as 0
        instead of raising
    subset : set of (person, type), optional
        evaluate only these gold triples

    Raises
    ------
    ValidationError
        on a gold triple without prediction unless ``allow_missing``, or when
        nothing is left to evaluate
    """
    predicted = {}
    for t in predictions:
        predicted[(t.person, t.relation, t.type)] = t.score
    pairs = []
    grouped = {}
    missing = 0
    for g in gold:
        a = g.assertion
        if subset is not None and g.key not in subset:
            continue
        score = predicted.get((a.person, TargetRelation.parse(a.relation), a.type))
        if score is None:
            if not allow_missing:
                raise ValidationError(f"no prediction for gold triple {a.person} {a.relation.value} {a.type}")
            missing += 1
            score = 0
        pairs.append((score, g.score))
        grouped.setdefault((a.person, a.relation), []).append((score, g.score))
    if missing:
        logger.warning("%d gold triples had no prediction and were scored 0", missing)
    pairs = _check_pairs(pairs)
    distances = _tau_groups(grouped, min_group)
    if distances:
        tau = float(np.mean(distances))
    else:
        logger.warning("no group is eligible for TAU, reporting 0.0")
        tau = 0.0
    return MetricsReport(
        acc=metric_acc(pairs, tolerance),
        asd=metric_asd(pairs),
        tau=tau,
        n_triples=len(pairs),
        n_rank_groups=len(distances),
    )


PROFESSION_NAMES = (
    "Actor", "Painter", "Physicist", "Lawyer", "Composer", "Architect", "Chemist",
    "Poet", "FilmDirector", "Farmer", "Engineer", "Novelist",
)
COUNTRY_NAMES = (
    "Germany", "France", "Japan", "Brazil", "Canada", "Italy", "Mexico", "Norway",
    "Kenya", "Vietnam",
)


@dataclass(frozen=True)
class WorldConfig:
    """Knobs of a synthetic world

    Attributes
    ----------
    n_persons : int
    n_professions, n_nationalities : int
        size of each type inventory
    max_types : int
        a person holds 1..max_types types per relation
    sentences_per_person : int
    words_per_sentence : int
    words_per_type : int
        type-specific vocabulary size
    background_words : int
        shared vocabulary size
    background_fraction : float
        share of sentence words drawn from the shared vocabulary
    sharpness : float
        mixture weights are proportional to exp(-sharpness * rank); inf gives a
        single relevant type per person
    plant_probability : float
        chance that a description's first sentence names the primary type
    kg_observed : float
        chance that a primary (person, type) pair appears as a direct KG edge
    kg_strength : float
        chance that a primary (person, type) pair is realized by its length-2 pattern;
        both chances shrink for secondary types by their weight relative to the primary
    dev_fraction : float
        share of persons whose gold triples go to the development split
    seed : int
    """

    n_persons: int = 60
    n_professions: int = 6
    n_nationalities: int = 4
    max_types: int = 3
    sentences_per_person: int = 12
    words_per_sentence: int = 10
    words_per_type: int = 12
    background_words: int = 40
    background_fraction: float = 0.3
    sharpness: float = 1.0
    plant_probability: float = 1.0
    kg_observed: float = 0.6
    kg_strength: float = 0.9
    dev_fraction: float = 0.5
    seed: int = 0

    def __post_init__(self):
        for name in (
            "n_persons", "n_professions", "n_nationalities", "max_types",
            "sentences_per_person", "words_per_sentence", "words_per_type", "background_words",
        ):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be >= 1")
        for name in ("background_fraction", "plant_probability", "kg_observed", "kg_strength", "dev_fraction"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValidationError(f"{name} must be a probability")
        if not self.sharpness >= 0:
            raise ValidationError("sharpness must be >= 0")


@dataclass(frozen=True)
class WorldFiles:
    """paths of a generated world; kb, gold, dev_gold and test_gold map relation -> path"""

    sentences: str
    kg: str
    descriptions: str
    kb: dict = field(default_factory=dict)
    gold: dict = field(default_factory=dict)
    dev_gold: dict = field(default_factory=dict)
    test_gold: dict = field(default_factory=dict)


def _type_inventory(names, n, prefix):
    return [names[i] if i < len(names) else f"{prefix}{i}" for i in range(n)]


def mixture_weights(k, sharpness):
    """normalized exp(-sharpness * rank) over ranks 0..k-1"""
    if math.isinf(sharpness):
        w = np.zeros(k)
        w[0] = 1.0
        return w
    w = np.exp(-sharpness * np.arange(k))
    return w / w.sum()


def gold_scores(weights):
    """round(7 w) with halves rounded up"""
    return [int(math.floor(7 * w + 0.5)) for w in weights]


def _write_gold(path, triples):
    with open(path, "w", encoding="utf-8") as handle:
        for g in triples:
            handle.write(f"{g.assertion.person}\t{g.assertion.type}\t{g.score}\n")


def generate_world(cfg, out_dir):
    """Write a synthetic world to ``out_dir``.

    Every person holds a ranked list of types per relation. Mixture weights over
    that list set the gold scores and the share of type-specific words in the
    person's sentences. The description's first sentence names the primary
    profession and primary nationality (each with ``plant_probability``), and a
    second sentence names the secondary types. The KG links persons to types
    directly or through pattern entities (member_of -> field for professions,
    born_in -> located_in for nationalities), less often the lower a type's weight.

    Returns
    -------
    WorldFiles
    """
    os.makedirs(out_dir, exist_ok=True)
    rng = np.random.default_rng(cfg.seed)
    inventory = {
        TargetRelation.PROFESSION: _type_inventory(PROFESSION_NAMES, cfg.n_professions, "Profession"),
        TargetRelation.NATIONALITY: _type_inventory(COUNTRY_NAMES, cfg.n_nationalities, "Country"),
    }
    type_words = {
        t: [f"{t.lower()}_w{j}" for j in range(cfg.words_per_type)]
        for types in inventory.values()
        for t in types
    }
    background = [f"common_w{j}" for j in range(cfg.background_words)]
    hubs = {
        TargetRelation.PROFESSION: {t: f"Org_{t}" for t in inventory[TargetRelation.PROFESSION]},
        TargetRelation.NATIONALITY: {t: f"City_{t}" for t in inventory[TargetRelation.NATIONALITY]},
    }
    pattern_edges = {TargetRelation.PROFESSION: ("member_of", "field"),
                     TargetRelation.NATIONALITY: ("born_in", "located_in")}

    persons = [f"P{i:04d}" for i in range(cfg.n_persons)]
    kb = {r: [] for r in TargetRelation}
    gold = {r: [] for r in TargetRelation}
    sentences = []
    descriptions = []
    kg = set()
    dev_persons = set()
    for relation, hub in hubs.items():
        first, second = pattern_edges[relation]
        for t, entity in hub.items():
            kg.add((entity, second, t))

    for person in persons:
        if rng.random() < cfg.dev_fraction:
            dev_persons.add(person)
        held = {}
        for relation in TargetRelation:
            types = inventory[relation]
            k = int(rng.integers(1, min(cfg.max_types, len(types)) + 1))
            chosen = [types[i] for i in rng.permutation(len(types))[:k]]
            weights = mixture_weights(k, cfg.sharpness)
            held[relation] = (chosen, weights)
            for t, score in zip(chosen, gold_scores(weights)):
                assertion = KbAssertion(person, relation, t)
                kb[relation].append(assertion)
                gold[relation].append(GoldTriple(assertion, score))
            for t, w in zip(chosen, weights):
                share = w / weights[0]
                if rng.random() < cfg.kg_observed * share:
                    kg.add((person, relation.value, t))
                if rng.random() < cfg.kg_strength * share:
                    kg.add((person, pattern_edges[relation][0], hubs[relation][t]))

        for _ in range(cfg.sentences_per_person):
            words = []
            for _ in range(cfg.words_per_sentence):
                if rng.random() < cfg.background_fraction:
                    words.append(background[int(rng.integers(len(background)))])
                    continue
                relation = TargetRelation.PROFESSION if rng.random() < 0.5 else TargetRelation.NATIONALITY
                chosen, weights = held[relation]
                t = chosen[int(rng.choice(len(chosen), p=weights))]
                words.append(type_words[t][int(rng.integers(cfg.words_per_type))])
            sentences.append((person, "This person " + " ".join(words) + "."))

        (professions, _), (countries, _) = held[TargetRelation.PROFESSION], held[TargetRelation.NATIONALITY]
        plant_profession = rng.random() < cfg.plant_probability
        plant_country = rng.random() < cfg.plant_probability
        first_sentence = f"{person} is "
        first_sentence += f"a {base_term(professions[0])}" if plant_profession else "a public figure"
        first_sentence += f" from {base_term(countries[0])}." if plant_country else " of some renown."
        text = first_sentence
        others = [base_term(t) for t in professions[1:]]
        places = [base_term(t) for t in countries[1:]]
        if others or places:
            extra = "They"
            if others:
                extra += " also worked as " + " and ".join(f"a {o}" for o in others)
            if places:
                extra += (" and" if others else "") + " also lived in " + " and ".join(places)
            text += " " + extra + "."
        descriptions.append((person, text))

    # occasional acquaintances vary person degree
    for person in persons:
        if rng.random() < 0.5:
            other = persons[int(rng.integers(len(persons)))]
            if other != person:
                kg.add((person, "knows", other))

    files = WorldFiles(
        sentences=os.path.join(out_dir, "sentences.tsv"),
        kg=os.path.join(out_dir, "kg.tsv"),
        descriptions=os.path.join(out_dir, "descriptions.tsv"),
        kb={r.value: os.path.join(out_dir, f"{r.value}.kb") for r in TargetRelation},
        gold={r.value: os.path.join(out_dir, f"{r.value}_gold.tsv") for r in TargetRelation},
        dev_gold={r.value: os.path.join(out_dir, f"{r.value}_dev_gold.tsv") for r in TargetRelation},
        test_gold={r.value: os.path.join(out_dir, f"{r.value}_test_gold.tsv") for r in TargetRelation},
    )
    with open(files.sentences, "w", encoding="utf-8") as handle:
        for sentence_id, (person, text) in enumerate(sentences, start=1):
            end = len("This person".encode("utf-8"))
            handle.write(f"{sentence_id}\t{text}\t{person}:0:{end}\n")
    with open(files.kg, "w", encoding="utf-8") as handle:
        for head, relation, tail in sorted(kg):
            handle.write(f"{head}\t{relation}\t{tail}\n")
    with open(files.descriptions, "w", encoding="utf-8") as handle:
        for person, text in descriptions:
            handle.write(f"{person}\t{text}\n")
    for relation in TargetRelation:
        write_kb(files.kb[relation.value], kb[relation])
        _write_gold(files.gold[relation.value], gold[relation])
        _write_gold(
            files.dev_gold[relation.value],
            [g for g in gold[relation] if g.assertion.person in dev_persons],
        )
        _write_gold(
            files.test_gold[relation.value],
            [g for g in gold[relation] if g.assertion.person not in dev_persons],
        )
    logger.info(
        "generated world: %d persons, %d sentences, %d KG triples in %s",
        len(persons),
        len(sentences),
        len(kg),
        out_dir,
    )
    return files


def predictions_from_scores(scores, relation):
    """ScoredTriples from a dict (person, type) -> int or None"""
    relation = TargetRelation.parse(relation)
    return [ScoredTriple(p, relation, t, s) for (p, t), s in sorted(scores.items())]
