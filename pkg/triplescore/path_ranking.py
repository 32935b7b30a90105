"""Knowledge-graph base scorer: path features between a person and a type entity,
classified by a random forest trained per target relation.

A path type is a sequence of (relation, direction) steps with direction "fwd" for
following an edge head -> tail and "inv" for tail -> head. The feature value of a
path type is the number of distinct simple ground paths of that type.
"""
import logging
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed
from scipy.stats import rankdata
from sklearn.ensemble import RandomForestClassifier
from sklearn.model_selection import train_test_split

from .config import as_bool
from .corpus import TargetRelation, types_by_person
from .errors import TrainingError, ValidationError
from .modelio import load_model, model_hash, save_model
from .scorer_driver import PROBABILITY, RawScore, ScorerDriver

logger = logging.getLogger(__name__)

FORWARD = "fwd"
INVERSE = "inv"

DEFAULT_GRID = (
    (2, "sqrt"),
    (2, "log2"),
    (5, "sqrt"),
    (5, "log2"),
    (10, "sqrt"),
    (10, "log2"),
)


@dataclass(frozen=True)
class KbGraph:
    """Directed multigraph with forward and inverse adjacency

    Attributes
    ----------
    entities : frozenset of str
    relations : frozenset of str
    forward : dict of entity -> tuple of (relation, tail)
    inverse : dict of entity -> tuple of (relation, head)
    """

    entities: frozenset = frozenset()
    relations: frozenset = frozenset()
    forward: dict = field(default_factory=dict)
    inverse: dict = field(default_factory=dict)

    def degree(self, entity):
        """number of triples the entity takes part in, incoming and outgoing"""
        return len(self.forward.get(entity, ())) + len(self.inverse.get(entity, ()))

    @property
    def edge_count(self):
        return sum(len(v) for v in self.forward.values())


@dataclass(frozen=True)
class PathFeatureVector:
    counts: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.counts)

    def get(self, path_type, default=0):
        return self.counts.get(path_type, default)


@dataclass(frozen=True)
class LabeledPair:
    head: str
    tail: str
    label: int


@dataclass(frozen=True, eq=False)
class ForestModel:
    """A trained forest exported to plain node arrays

    Every tree is stored as parallel arrays over its nodes: ``left``/``right``
    child indexes (-1 at leaves), split ``feature`` and ``threshold`` (go left when
    x[feature] <= threshold) and ``value``, the class fractions [negative, positive]
    of the training samples reaching the node.
    """

    relation: str
    feature_paths: tuple
    trees: tuple
    min_samples_split: int
    max_features: str
    validation_auc: float
    max_len: int = 3
    inverse_edges: bool = True

    @property
    def n_trees(self):
        return len(self.trees)

    @property
    def feature_index(self):
        return {p: i for i, p in enumerate(self.feature_paths)}

    def vectorize(self, features):
        index = self.feature_index
        x = np.zeros(len(self.feature_paths))
        for path_type, count in features.counts.items():
            i = index.get(path_type)
            if i is not None:
                x[i] = count
        return x

    def tree_probabilities(self, x):
        """positive-class leaf fraction reached in every tree"""
        out = np.empty(len(self.trees))
        for k, (left, right, feature, threshold, value) in enumerate(self.trees):
            node = 0
            while left[node] != -1:
                if x[feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            out[k] = value[node, 1]
        return out

    def predict_proba(self, x):
        return float(np.mean(self.tree_probabilities(x)))


def build_graph(triples):
    """index (head, relation, tail) triples, dropping duplicates"""
    forward, inverse = {}, {}
    seen = set()
    entities, relations = set(), set()
    for head, relation, tail in triples:
        if (head, relation, tail) in seen:
            continue
        seen.add((head, relation, tail))
        forward.setdefault(head, []).append((relation, tail))
        inverse.setdefault(tail, []).append((relation, head))
        entities.update((head, tail))
        relations.add(relation)
    return KbGraph(
        frozenset(entities),
        frozenset(relations),
        {k: tuple(v) for k, v in forward.items()},
        {k: tuple(v) for k, v in inverse.items()},
    )


def _neighbours(graph, node, inverse_edges):
    for relation, other in graph.forward.get(node, ()):
        yield (relation, FORWARD), other
    if inverse_edges:
        for relation, other in graph.inverse.get(node, ()):
            yield (relation, INVERSE), other


def extract_paths(graph, head, tail, max_len=3, inverse_edges=True):
    """Count simple paths of length <= max_len from head to tail, grouped by path type.

    Intermediate entities are distinct and never the head or the tail. No relation
    is blocked, so a direct edge of the target relation is a length-1 feature.
    """
    counts = Counter()
    if head == tail or head not in graph.entities or tail not in graph.entities:
        return PathFeatureVector({})
    visited = {head}
    steps = []

    def _dfs(node):
        for step, other in _neighbours(graph, node, inverse_edges):
            if other == tail:
                counts[tuple(steps) + (step,)] += 1
            elif len(steps) + 1 < max_len and other not in visited:
                visited.add(other)
                steps.append(step)
                _dfs(other)
                steps.pop()
                visited.discard(other)

    _dfs(head)
    return PathFeatureVector(dict(counts))


def make_training_pairs(
    graph, kb, relation, type_universe=None, top_n=10000, seed=0, relation_label=None
):
    """Positive pairs from graph-observed types of the best connected persons, one
    random negative per positive.

    Arguments
    ---------
    graph : KbGraph
    kb : list of KbAssertion
        the task KB of the relation; negatives never contradict it
    relation : TargetRelation
    type_universe : iterable of str, optional
        types a negative may be drawn from; KB types plus graph-observed types by default
    top_n : int
        number of persons kept after ranking by degree (ties by id)
    relation_label : str, optional
        edge label of the target relation in the graph, the relation name by default
    """
    relation = TargetRelation.parse(relation)
    label = relation_label or relation.value
    observed = {}
    for head, edges in graph.forward.items():
        types = {t for r, t in edges if r == label}
        if types:
            observed[head] = types
    kb_types = {p: set(ts) for p, ts in types_by_person(kb).items()}
    if type_universe is None:
        universe = sorted({a.type for a in kb} | {t for ts in observed.values() for t in ts})
    else:
        universe = sorted(set(type_universe))
    ranked = sorted(observed, key=lambda p: (-graph.degree(p), p))[:top_n]

    rng = np.random.default_rng(seed)
    pairs = []
    for person in ranked:
        excluded = observed[person] | kb_types.get(person, set())
        alternatives = [t for t in universe if t not in excluded]
        for type_id in sorted(observed[person]):
            pairs.append(LabeledPair(person, type_id, 1))
            if not alternatives:
                logger.warning("no unobserved type left for %s, negative skipped", person)
                continue
            negative = alternatives[int(rng.integers(len(alternatives)))]
            pairs.append(LabeledPair(person, negative, 0))
    return pairs


def compute_auc(scores):
    """Area under the ROC curve as P(random positive outscores random negative),
    ties counting one half

    Arguments
    ---------
    scores : list of (float, label)
        label is truthy for positives
    """
    values = np.array([s for s, _ in scores], dtype=float)
    labels = np.array([bool(l) for _, l in scores])
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValidationError("AUC needs both positive and negative labels")
    ranks = rankdata(values)
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def max_features_count(rule, n_features):
    if rule == "sqrt":
        k = math.ceil(math.sqrt(n_features))
    elif rule == "log2":
        k = math.ceil(math.log2(n_features)) if n_features > 1 else 1
    else:
        raise ValidationError(f"unknown max_features rule '{rule}'")
    return max(1, min(n_features, k))


def _export_tree(estimator, positive_column):
    tree = estimator.tree_
    value = np.asarray(tree.value[:, 0, :], dtype=float)
    value = value / value.sum(axis=1, keepdims=True)
    fractions = np.column_stack([1.0 - value[:, positive_column], value[:, positive_column]])
    return (
        np.asarray(tree.children_left, dtype=np.int64),
        np.asarray(tree.children_right, dtype=np.int64),
        np.asarray(tree.feature, dtype=np.int64),
        np.asarray(tree.threshold, dtype=float),
        fractions,
    )


def pair_features(graph, pairs, max_len=3, inverse_edges=True, jobs=1):
    return Parallel(n_jobs=jobs, prefer="threads")(
        delayed(extract_paths)(graph, p.head, p.tail, max_len, inverse_edges) for p in pairs
    )


def train_forest(
    pairs,
    graph,
    hyper_grid=DEFAULT_GRID,
    seed=0,
    n_trees=300,
    max_len=3,
    inverse_edges=True,
    validation_fraction=0.3,
    relation=TargetRelation.PROFESSION,
    jobs=1,
):
    """Fit a forest per grid cell on a seeded 70/30 split and keep the best by
    validation AUC (ties keep the earlier cell)

    Raises
    ------
    TrainingError
        if the pairs carry a single label or no pair has any path feature
    """
    y = np.array([p.label for p in pairs], dtype=int)
    if len(set(y.tolist())) < 2:
        raise TrainingError("path ranking needs both positive and negative pairs")
    features = pair_features(graph, pairs, max_len, inverse_edges, jobs)
    feature_paths = tuple(sorted({k for f in features for k in f.counts}))
    if not feature_paths:
        raise TrainingError("no training pair has any path feature")
    index = {p: i for i, p in enumerate(feature_paths)}
    X = np.zeros((len(pairs), len(feature_paths)))
    for r, f in enumerate(features):
        for k, count in f.counts.items():
            X[r, index[k]] = count

    random_state = int(seed) % (2**32)
    stratify = y if min(np.bincount(y)) >= 2 else None
    train_idx, val_idx = train_test_split(
        np.arange(len(y)),
        test_size=validation_fraction,
        random_state=random_state,
        stratify=stratify,
    )
    best = None
    for min_samples_split, rule in hyper_grid:
        forest = RandomForestClassifier(
            n_estimators=n_trees,
            criterion="gini",
            bootstrap=True,
            min_samples_split=min_samples_split,
            max_features=max_features_count(rule, len(feature_paths)),
            random_state=random_state,
            n_jobs=jobs,
        )
        forest.fit(X[train_idx], y[train_idx])
        positive_column = list(forest.classes_).index(1)
        y_val = y[val_idx]
        if len(set(y_val.tolist())) < 2:
            logger.warning("validation split has a single label, AUC undefined")
            auc = float("nan")
        else:
            proba = forest.predict_proba(X[val_idx])[:, positive_column]
            auc = compute_auc(list(zip(proba, y_val)))
        logger.info(
            "forest min_samples_split=%d max_features=%s: validation AUC %.4f",
            min_samples_split,
            rule,
            auc,
        )
        if best is None or (auc > best[0]):
            best = (auc, min_samples_split, rule, forest, positive_column)
    auc, min_samples_split, rule, forest, positive_column = best
    trees = tuple(_export_tree(est, positive_column) for est in forest.estimators_)
    return ForestModel(
        TargetRelation.parse(relation).value,
        feature_paths,
        trees,
        int(min_samples_split),
        rule,
        float(auc),
        int(max_len),
        bool(inverse_edges),
    )


def score_path_ranking(model, graph, person, type_id, relation, kb_types=None, min_professions=4):
    """Forest probability that (person, type) holds; abstains for profession queries
    about persons with fewer than ``min_professions`` distinct KB professions"""
    relation = TargetRelation.parse(relation)
    if relation is TargetRelation.PROFESSION:
        n_types = len(set((kb_types or {}).get(person, ())))
        if n_types < min_professions:
            return RawScore.abstain(PROBABILITY)
    features = extract_paths(graph, person, type_id, model.max_len, model.inverse_edges)
    value = model.predict_proba(model.vectorize(features))
    return RawScore(min(1.0, max(0.0, value)), PROBABILITY)


def _encode_paths(feature_paths):
    return [[list(step) for step in path] for path in feature_paths]


def _decode_paths(encoded):
    return tuple(tuple((str(r), str(d)) for r, d in path) for path in encoded)


class PathRankingDriver(ScorerDriver):
    """Random forest over KG path features, one forest per target relation

    Attributes
    ----------
    n_trees : int
        trees per forest
    top_n : int
        best connected persons used for training pairs
    max_len : int
        maximum path length
    inverse_edges : bool
        whether paths may follow edges backwards
    min_professions : int
        profession queries for persons with fewer KB professions abstain
    relation_label : str
        graph edge label of the target relation (defaults to the relation name)
    """

    name = "pathrank"
    kind = PROBABILITY

    def __init__(self, args):
        args = {k.lower(): v for k, v in args.items()}
        self.parse_input(args)
        self.model = None

    def parse_input(self, args):
        if "n_trees" in args:
            self.n_trees = int(args["n_trees"])
        else:
            self.n_trees = 300

        if "top_n" in args:
            self.top_n = int(args["top_n"])
        else:
            self.top_n = 10000

        if "max_len" in args:
            self.max_len = int(args["max_len"])
        else:
            self.max_len = 3

        if "inverse_edges" in args:
            self.inverse_edges = as_bool(args["inverse_edges"])
        else:
            self.inverse_edges = True

        if "min_professions" in args:
            self.min_professions = int(args["min_professions"])
        else:
            self.min_professions = 4

        if "relation_label" in args and args["relation_label"]:
            self.relation_label = str(args["relation_label"])
        else:
            self.relation_label = None

        if not 1 <= self.max_len <= 3:
            raise ValidationError(f"max_len must be in 1..3, got {self.max_len}")

    def train(self, context):
        pairs = make_training_pairs(
            context.graph,
            context.assertions,
            context.relation,
            top_n=self.top_n,
            seed=context.seed,
            relation_label=self.relation_label,
        )
        logger.info("path ranking: %d labelled pairs", len(pairs))
        self.model = train_forest(
            pairs,
            context.graph,
            seed=context.seed,
            n_trees=self.n_trees,
            max_len=self.max_len,
            inverse_edges=self.inverse_edges,
            relation=context.relation,
            jobs=context.jobs,
        )
        return self

    def score(self, context, pairs):
        pairs = list(pairs)
        results = Parallel(n_jobs=context.jobs, prefer="threads")(
            delayed(score_path_ranking)(
                self.model,
                context.graph,
                p,
                t,
                context.relation,
                context.kb_types,
                self.min_professions,
            )
            for p, t in pairs
        )
        return dict(zip(pairs, results))

    def _arrays(self):
        trees = self.model.trees
        sizes = [len(t[0]) for t in trees]
        arrays = {
            "node_offsets": np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64),
            "left": np.concatenate([t[0] for t in trees]),
            "right": np.concatenate([t[1] for t in trees]),
            "feature": np.concatenate([t[2] for t in trees]),
            "threshold": np.concatenate([t[3] for t in trees]),
            "value": np.vstack([t[4] for t in trees]),
        }
        meta = {
            "relation": self.model.relation,
            "feature_paths": _encode_paths(self.model.feature_paths),
            "min_samples_split": self.model.min_samples_split,
            "max_features": self.model.max_features,
            "validation_auc": self.model.validation_auc,
            "max_len": self.model.max_len,
            "inverse_edges": self.model.inverse_edges,
        }
        return arrays, meta

    def save(self, path):
        arrays, meta = self._arrays()
        save_model(path, self.name, arrays, meta)

    @classmethod
    def load(cls, path, args=None):
        arrays, meta = load_model(path, cls.name)
        driver = cls(args or {})
        offsets = arrays["node_offsets"]
        trees = []
        for k in range(len(offsets) - 1):
            lo, hi = int(offsets[k]), int(offsets[k + 1])
            trees.append(
                tuple(arrays[name][lo:hi] for name in ("left", "right", "feature", "threshold", "value"))
            )
        driver.model = ForestModel(
            meta["relation"],
            _decode_paths(meta["feature_paths"]),
            tuple(trees),
            int(meta["min_samples_split"]),
            meta["max_features"],
            float(meta["validation_auc"]),
            int(meta["max_len"]),
            bool(meta["inverse_edges"]),
        )
        return driver

    def model_hash(self):
        arrays, meta = self._arrays()
        return model_hash(self.name, arrays, meta)
