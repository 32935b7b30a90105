"""The three text-based base scorers: word classification, word counting and
word MLE.

All three read a person's AssociatedText; they abstain (RawScore with value None)
rather than score 0 when a person has no usable text.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed
from scipy import optimize
from scipy.special import expit
from sklearn.model_selection import StratifiedKFold

from .corpus import TargetRelation
from .errors import ValidationError
from .features import (
    Vocabulary,
    TfIdfWeights,
    build_candidate_pools,
    build_vocabulary,
    corpus_weights,
    sample_examples,
    tfidf_matrix,
    tfidf_vector,
    type_rng,
)
from .modelio import load_model, model_hash, save_model
from .scorer_driver import PROBABILITY, WEIGHTED_SUM, RawScore, ScorerDriver

logger = logging.getLogger(__name__)

PSEUDO_TYPE = "<pseudo>"
MLE_SMOOTHING = 1e-9


# --------------------------------------------------------------------------
# word classification
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TypeClassifier:
    coef: np.ndarray
    intercept: float
    lam: float
    cv_accuracy: float


@dataclass(frozen=True, eq=False)
class LogisticModel:
    """Per-type l2-regularized logistic regression over a shared vocabulary

    Attributes
    ----------
    vocab : Vocabulary
        tf-idf feature space of every classifier
    classifiers : dict of type id -> TypeClassifier
    untrainable : tuple of str
        types without enough examples of both labels; their scores abstain
    """

    vocab: Vocabulary
    classifiers: dict = field(default_factory=dict)
    untrainable: tuple = ()


@dataclass(frozen=True)
class LogisticFit:
    coef: np.ndarray
    intercept: float
    losses: tuple
    grad_norm: float
    iterations: int


def lambda_grid(size=10, low=1e-4, high=1e4):
    return np.logspace(np.log10(low), np.log10(high), size)


def logistic_objective(theta, X, y, lam):
    """regularized negative log-likelihood and its gradient; the bias is unpenalized

    ``y`` holds labels in {0, 1}; theta = [w_1 .. w_V, b].
    """
    w, b = theta[:-1], theta[-1]
    s = 2.0 * y - 1.0
    z = X @ w + b
    loss = np.logaddexp(0.0, -s * z).sum() + 0.5 * lam * w.dot(w)
    g = -s * expit(-s * z)
    grad = np.empty_like(theta)
    grad[:-1] = X.T @ g + lam * w
    grad[-1] = g.sum()
    return loss, grad


def fit_logistic(X, y, lam, tol=1e-6, max_iter=1000):
    """Fit w, b with L-BFGS-B; stops when the gradient inf-norm drops below ``tol``.

    Returns
    -------
    LogisticFit
        the weights plus the objective value at every accepted iterate
    """
    y = np.asarray(y, dtype=float)
    theta0 = np.zeros(X.shape[1] + 1)
    losses = [logistic_objective(theta0, X, y, lam)[0]]

    def _record(theta):
        losses.append(logistic_objective(theta, X, y, lam)[0])

    result = optimize.minimize(
        logistic_objective,
        theta0,
        args=(X, y, lam),
        jac=True,
        method="L-BFGS-B",
        callback=_record,
        options={"gtol": tol, "maxiter": max_iter, "ftol": 0.0},
    )
    _, grad = logistic_objective(result.x, X, y, lam)
    return LogisticFit(
        result.x[:-1].copy(),
        float(result.x[-1]),
        tuple(losses),
        float(np.abs(grad).max()),
        int(result.nit),
    )


def _predict_labels(X, coef, intercept):
    return (X @ coef + intercept > 0).astype(int)


def _train_type(type_id, X, y, grid, cv_folds, seed, tol, max_iter):
    """cross-validate lambda over the grid, then refit on all examples of the type"""
    n_min = int(min(np.sum(y == 1), np.sum(y == 0)))
    if n_min < 2:
        return type_id, None
    folds = StratifiedKFold(
        n_splits=min(cv_folds, n_min),
        shuffle=True,
        random_state=int(type_rng(seed, type_id).integers(2**31 - 1)),
    )
    splits = list(folds.split(np.zeros(len(y)), y))
    best_lam, best_acc = None, -1.0
    # descending lambda so that ties keep the stronger regularization
    for lam in sorted(grid, reverse=True):
        accuracies = []
        for train_idx, test_idx in splits:
            fit = fit_logistic(X[train_idx], y[train_idx], lam, tol, max_iter)
            predicted = _predict_labels(X[test_idx], fit.coef, fit.intercept)
            accuracies.append(np.mean(predicted == y[test_idx]))
        acc = float(np.mean(accuracies))
        if acc > best_acc:
            best_lam, best_acc = float(lam), acc
    fit = fit_logistic(X, y, best_lam, tol, max_iter)
    return type_id, TypeClassifier(fit.coef, fit.intercept, best_lam, best_acc)


def train_word_classification(
    examples, texts, vocab, cv_grid=None, seed=0, cv_folds=5, tol=1e-6, max_iter=1000, jobs=1
):
    """Train one logistic classifier per type on tf-idf vectors of sampled examples.

    Arguments
    ---------
    examples : SampledExamples
        labelled persons per type
    texts : dict of person id -> AssociatedText
    vocab : Vocabulary
        feature space (the 20,000 most frequent words of the training corpus)
    cv_grid : sequence of float, optional
        candidate regularization strengths, 10 log-spaced values in [1e-4, 1e4] by default
    seed : int
        drives the cross-validation folds

    Returns
    -------
    LogisticModel
    """
    grid = lambda_grid() if cv_grid is None else np.asarray(cv_grid, dtype=float)
    jobs_list = []
    for type_id in sorted(examples.examples):
        persons = examples.persons(type_id)
        docs = [texts.get(p) for p in persons]
        keep = np.array([i for i, d in enumerate(docs) if d is not None], dtype=int)
        X = tfidf_matrix([docs[i] for i in keep], vocab)
        y = examples.labels(type_id)[keep]
        jobs_list.append((type_id, X, y))

    results = Parallel(n_jobs=jobs, prefer="threads")(
        delayed(_train_type)(type_id, X, y, grid, cv_folds, seed, tol, max_iter)
        for type_id, X, y in jobs_list
    )
    classifiers, untrainable = {}, []
    for type_id, classifier in results:
        if classifier is None:
            logger.warning("type %s lacks 2 examples of each label, untrainable", type_id)
            untrainable.append(type_id)
        else:
            classifiers[type_id] = classifier
    return LogisticModel(vocab, classifiers, tuple(sorted(untrainable)))


def score_word_classification(model, type_id, person_text):
    """sigmoid(w . x + b) on the person's tf-idf vector; abstains on empty text or
    an untrainable/unknown type"""
    classifier = model.classifiers.get(type_id)
    if classifier is None or person_text is None or person_text.is_empty:
        return RawScore.abstain(PROBABILITY)
    x = tfidf_vector(person_text, model.vocab)
    z = float((x @ classifier.coef)[0]) + classifier.intercept
    return RawScore(float(expit(z)), PROBABILITY)


# --------------------------------------------------------------------------
# word counting
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CountingModel:
    """Per type: tf-idf weights over the type's positive-candidate corpus"""

    weights: dict = field(default_factory=dict)


def build_counting_model(pools, texts, cap=100000):
    weights = {}
    for type_id in pools.type_ids:
        docs = [texts[p] for p in pools.positives[type_id] if p in texts]
        docs = [d for d in docs if not d.is_empty]
        if not docs:
            logger.warning("type %s has no positive candidate with text, dropped", type_id)
            continue
        vocab = build_vocabulary(docs, cap)
        weights[type_id] = corpus_weights(docs, vocab)
    return CountingModel(weights)


def score_word_counting(model, type_id, person_text):
    """s = sum over words of count(w) x weight(w); abstains on empty text"""
    weights = model.weights.get(type_id)
    if weights is None or person_text is None or person_text.is_empty:
        return RawScore.abstain(WEIGHTED_SUM)
    total = 0.0
    for token, count in person_text.token_counts.items():
        total += count * weights.get(token, 0.0)
    return RawScore(total, WEIGHTED_SUM)


# --------------------------------------------------------------------------
# word MLE
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MleModel:
    """Fixed word distributions P(w | type) over a shared vocabulary

    Attributes
    ----------
    vocab : Vocabulary
        the 20,000 most frequent words over all persons; its idf is the global idf
    type_ids : tuple of str
        row labels of ``dist``; PSEUDO_TYPE first when present
    dist : numpy array of floats, len(type_ids) x V
        smoothed, row-normalized distributions
    """

    vocab: Vocabulary
    type_ids: tuple
    dist: np.ndarray

    @property
    def has_pseudo(self):
        return PSEUDO_TYPE in self.type_ids

    def row(self, type_id):
        return self.type_ids.index(type_id)


@dataclass(frozen=True, eq=False)
class MleEstimate:
    """EM result for one person

    Attributes
    ----------
    components : tuple of str
        mixture components, PSEUDO_TYPE first when the model has one
    mixture : numpy array of floats
        P(component), sums to 1
    log_likelihood : float
        final value of the tf-weighted log-likelihood
    history : tuple of float
        log-likelihood at the initial point and after every EM iteration
    """

    person: str
    components: tuple
    mixture: np.ndarray
    log_likelihood: float
    history: tuple

    def probability(self, type_id):
        return float(self.mixture[self.components.index(type_id)])


def _word_distribution(docs, vocab, epsilon=MLE_SMOOTHING):
    weights = corpus_weights(docs, vocab).values
    total = weights.sum()
    if total <= 0:
        return None
    p = weights / total
    return (p + epsilon) / (1.0 + epsilon * len(vocab))


def build_mle_model(pools, texts, vocab, relation, pseudo_sample_size=10000, seed=0):
    """Estimate P(w | type) from each type's positive-candidate corpus.

    For the profession relation a pseudo type built from a random sample of
    persons absorbs background words; nationality has no pseudo type.
    """
    relation = TargetRelation.parse(relation)
    type_ids, rows = [], []
    if relation is TargetRelation.PROFESSION and pseudo_sample_size > 0:
        candidates = sorted(p for p, t in texts.items() if not t.is_empty)
        rng = np.random.default_rng(seed)
        n = min(pseudo_sample_size, len(candidates))
        picked = sorted(rng.choice(len(candidates), size=n, replace=False)) if n else []
        row = _word_distribution([texts[candidates[i]] for i in picked], vocab)
        if row is not None:
            type_ids.append(PSEUDO_TYPE)
            rows.append(row)
    for type_id in pools.type_ids:
        docs = [texts[p] for p in pools.positives[type_id] if p in texts]
        row = _word_distribution(docs, vocab)
        if row is None:
            logger.warning("type %s has no usable positive text, dropped from MLE", type_id)
            continue
        type_ids.append(type_id)
        rows.append(row)
    dist = np.vstack(rows) if rows else np.zeros((0, len(vocab)))
    return MleModel(vocab, tuple(type_ids), dist)


def _log_likelihood(mixture, A, tf):
    return float(tf @ np.log(mixture @ A))


def estimate_mle(model, person_text, person_types, max_iter=200, tol=1e-6):
    """EM estimate of the person's type mixture with P(w | type) held fixed.

    tf_j is the person's count of word j times its global idf. Starts from the
    uniform mixture and stops when the log-likelihood changes by less than
    ``tol`` or after ``max_iter`` iterations.

    Returns
    -------
    MleEstimate, or None when the text is empty or entirely out of vocabulary
    """
    person_types = list(person_types)
    if not person_types:
        raise ValidationError("estimate_mle needs at least one type")
    unknown = [t for t in person_types if t not in model.type_ids]
    if unknown:
        raise ValidationError(f"types not in the MLE model: {', '.join(unknown)}")
    if person_text is None or person_text.is_empty:
        return None
    idx, counts = [], []
    for token, count in person_text.token_counts.items():
        i = model.vocab.index.get(token)
        if i is not None:
            idx.append(i)
            counts.append(count)
    if not idx:
        return None
    idx = np.array(idx)
    tf = np.asarray(counts, dtype=float) * model.vocab.idf[idx]

    components = ([PSEUDO_TYPE] if model.has_pseudo else []) + person_types
    A = model.dist[[model.row(c) for c in components]][:, idx]
    mixture = np.full(len(components), 1.0 / len(components))
    ll = _log_likelihood(mixture, A, tf)
    history = [ll]
    for _ in range(max_iter):
        # E-step: responsibilities of each component for each word
        weighted = mixture[:, None] * A
        resp = weighted / weighted.sum(axis=0)
        # M-step
        mixture = resp @ tf / tf.sum()
        new_ll = _log_likelihood(mixture, A, tf)
        history.append(new_ll)
        converged = abs(new_ll - ll) < tol
        ll = new_ll
        if converged:
            break
    return MleEstimate(person_text.person, tuple(components), mixture, ll, tuple(history))


def score_word_mle(model, person_text, person_types, max_iter=200, tol=1e-6):
    """mixture probability per type; types unknown to the model abstain"""
    known = [t for t in person_types if t in model.type_ids and t != PSEUDO_TYPE]
    scores = {t: RawScore.abstain(PROBABILITY) for t in person_types}
    if not known:
        return scores
    estimate = estimate_mle(model, person_text, known, max_iter, tol)
    if estimate is None:
        return scores
    for t in known:
        value = min(1.0, max(0.0, estimate.probability(t)))
        scores[t] = RawScore(value, PROBABILITY)
    return scores


# --------------------------------------------------------------------------
# drivers
# --------------------------------------------------------------------------


def _vocab_arrays(vocab, prefix=""):
    return {
        prefix + "tokens": np.array(vocab.tokens, dtype=str),
        prefix + "df": np.asarray(vocab.df, dtype=np.int64),
        prefix + "n_docs": np.array(vocab.n_docs),
    }


def _vocab_from_arrays(arrays, prefix=""):
    return Vocabulary.from_arrays(
        arrays[prefix + "tokens"].tolist(), arrays[prefix + "df"], int(arrays[prefix + "n_docs"])
    )


class WordClassificationDriver(ScorerDriver):
    """Per-type logistic regression on tf-idf features of associated text

    Attributes
    ----------
    vocab_cap : int
        number of most frequent training-corpus words kept as features
    bucket_cap : int
        maximum positives drawn per popularity bucket
    cv_folds : int
        cross-validation folds for choosing the regularization strength
    grid_size : int
        number of log-spaced regularization values in [1e-4, 1e4]
    model : LogisticModel
        the trained model, None before train() or load()
    """

    name = "wordclass"
    kind = PROBABILITY

    def __init__(self, args):
        args = {k.lower(): v for k, v in args.items()}
        self.parse_input(args)
        self.model = None

    def parse_input(self, args):
        if "vocab_cap" in args:
            self.vocab_cap = int(args["vocab_cap"])
        else:
            self.vocab_cap = 20000

        if "bucket_cap" in args:
            self.bucket_cap = int(args["bucket_cap"])
        else:
            self.bucket_cap = 100

        if "cv_folds" in args:
            self.cv_folds = int(args["cv_folds"])
        else:
            self.cv_folds = 5

        if "grid_size" in args:
            self.grid_size = int(args["grid_size"])
        else:
            self.grid_size = 10

    def train(self, context):
        pools = build_candidate_pools(context.assertions)
        examples = sample_examples(pools, context.popularity, context.seed, self.bucket_cap)
        sampled = sorted({p for t in examples.examples for p in examples.persons(t)})
        corpus = [context.texts[p] for p in sampled if p in context.texts]
        vocab = build_vocabulary(corpus, self.vocab_cap)
        self.model = train_word_classification(
            examples,
            context.texts,
            vocab,
            lambda_grid(self.grid_size),
            seed=context.seed,
            cv_folds=self.cv_folds,
            jobs=context.jobs,
        )
        logger.info(
            "word classification: %d classifiers, %d untrainable types",
            len(self.model.classifiers),
            len(self.model.untrainable),
        )
        return self

    def score(self, context, pairs):
        return {
            (p, t): score_word_classification(self.model, t, context.texts.get(p))
            for p, t in pairs
        }

    def _arrays(self):
        type_ids = sorted(self.model.classifiers)
        V = len(self.model.vocab)
        arrays = _vocab_arrays(self.model.vocab)
        arrays["type_ids"] = np.array(type_ids, dtype=str)
        arrays["coef"] = (
            np.vstack([self.model.classifiers[t].coef for t in type_ids])
            if type_ids
            else np.zeros((0, V))
        )
        arrays["intercept"] = np.array([self.model.classifiers[t].intercept for t in type_ids])
        arrays["lam"] = np.array([self.model.classifiers[t].lam for t in type_ids])
        arrays["cv_accuracy"] = np.array(
            [self.model.classifiers[t].cv_accuracy for t in type_ids]
        )
        meta = {"untrainable": list(self.model.untrainable)}
        return arrays, meta

    def save(self, path):
        arrays, meta = self._arrays()
        save_model(path, self.name, arrays, meta)

    @classmethod
    def load(cls, path, args=None):
        arrays, meta = load_model(path, cls.name)
        driver = cls(args or {})
        classifiers = {
            str(t): TypeClassifier(
                arrays["coef"][i], float(arrays["intercept"][i]), float(arrays["lam"][i]),
                float(arrays["cv_accuracy"][i]),
            )
            for i, t in enumerate(arrays["type_ids"].tolist())
        }
        driver.model = LogisticModel(
            _vocab_from_arrays(arrays), classifiers, tuple(meta["untrainable"])
        )
        return driver

    def model_hash(self):
        arrays, meta = self._arrays()
        return model_hash(self.name, arrays, meta)


class WordCountingDriver(ScorerDriver):
    """Weighted word counts against each type's positive-candidate corpus"""

    name = "wordcount"
    kind = WEIGHTED_SUM

    def __init__(self, args):
        args = {k.lower(): v for k, v in args.items()}
        self.parse_input(args)
        self.model = None

    def parse_input(self, args):
        if "vocab_cap" in args:
            self.vocab_cap = int(args["vocab_cap"])
        else:
            self.vocab_cap = 100000

    def train(self, context):
        pools = build_candidate_pools(context.assertions)
        self.model = build_counting_model(pools, context.texts, self.vocab_cap)
        logger.info("word counting: weights for %d types", len(self.model.weights))
        return self

    def score(self, context, pairs):
        return {
            (p, t): score_word_counting(self.model, t, context.texts.get(p)) for p, t in pairs
        }

    def _arrays(self):
        type_ids = sorted(self.model.weights)
        tokens, values, offsets, dfs, n_docs = [], [], [0], [], []
        for t in type_ids:
            w = self.model.weights[t]
            tokens.extend(w.vocab.tokens)
            values.extend(w.values.tolist())
            dfs.extend(w.vocab.df.tolist())
            n_docs.append(w.vocab.n_docs)
            offsets.append(len(tokens))
        arrays = {
            "type_ids": np.array(type_ids, dtype=str),
            "tokens": np.array(tokens, dtype=str),
            "weights": np.array(values, dtype=float),
            "df": np.array(dfs, dtype=np.int64),
            "n_docs": np.array(n_docs, dtype=np.int64),
            "offsets": np.array(offsets, dtype=np.int64),
        }
        return arrays, {}

    def save(self, path):
        arrays, meta = self._arrays()
        save_model(path, self.name, arrays, meta)

    @classmethod
    def load(cls, path, args=None):
        arrays, _ = load_model(path, cls.name)
        driver = cls(args or {})
        tokens = arrays["tokens"].tolist()
        offsets = arrays["offsets"]
        weights = {}
        for i, t in enumerate(arrays["type_ids"].tolist()):
            lo, hi = int(offsets[i]), int(offsets[i + 1])
            vocab = Vocabulary.from_arrays(
                tokens[lo:hi], arrays["df"][lo:hi], int(arrays["n_docs"][i])
            )
            weights[str(t)] = TfIdfWeights(vocab, arrays["weights"][lo:hi])
        driver.model = CountingModel(weights)
        return driver

    def model_hash(self):
        arrays, meta = self._arrays()
        return model_hash(self.name, arrays, meta)


class WordMleDriver(ScorerDriver):
    """Generative mixture of fixed per-type word distributions, fit per person by EM"""

    name = "wordmle"
    kind = PROBABILITY

    def __init__(self, args):
        args = {k.lower(): v for k, v in args.items()}
        self.parse_input(args)
        self.model = None

    def parse_input(self, args):
        if "vocab_cap" in args:
            self.vocab_cap = int(args["vocab_cap"])
        else:
            self.vocab_cap = 20000

        if "pseudo_sample_size" in args:
            self.pseudo_sample_size = int(args["pseudo_sample_size"])
        else:
            self.pseudo_sample_size = 10000

        if "max_iter" in args:
            self.max_iter = int(args["max_iter"])
        else:
            self.max_iter = 200

        if "tol" in args:
            self.tol = float(args["tol"])
        else:
            self.tol = 1e-6

    def train(self, context):
        pools = build_candidate_pools(context.assertions)
        vocab = build_vocabulary(context.texts.values(), self.vocab_cap)
        self.model = build_mle_model(
            pools, context.texts, vocab, context.relation, self.pseudo_sample_size, context.seed
        )
        logger.info(
            "word MLE: %d distributions (pseudo type: %s)",
            len(self.model.type_ids),
            self.model.has_pseudo,
        )
        return self

    def score(self, context, pairs):
        wanted = {}
        for p, t in pairs:
            wanted.setdefault(p, []).append(t)
        scores = {}
        for person, requested in wanted.items():
            # the mixture is over every KB type of the person, not only the requested ones
            types = list(dict.fromkeys(list(context.kb_types.get(person, ())) + requested))
            per_type = score_word_mle(
                self.model, context.texts.get(person), types, self.max_iter, self.tol
            )
            for t in requested:
                scores[(person, t)] = per_type[t]
        return scores

    def _arrays(self):
        arrays = _vocab_arrays(self.model.vocab)
        arrays["type_ids"] = np.array(self.model.type_ids, dtype=str)
        arrays["dist"] = self.model.dist
        return arrays, {}

    def save(self, path):
        arrays, meta = self._arrays()
        save_model(path, self.name, arrays, meta)

    @classmethod
    def load(cls, path, args=None):
        arrays, _ = load_model(path, cls.name)
        driver = cls(args or {})
        driver.model = MleModel(
            _vocab_from_arrays(arrays),
            tuple(str(t) for t in arrays["type_ids"].tolist()),
            arrays["dist"],
        )
        return driver

    def model_hash(self):
        arrays, meta = self._arrays()
        return model_hash(self.name, arrays, meta)
