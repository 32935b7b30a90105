"""Stage orchestration: ingest, train, score, map, weights, combine, refine, evaluate.

Every stage reads and writes plain files so the command-line subcommands can run
one stage at a time; ``run_pipeline`` chains all of them and records a manifest.
"""
import json
import logging
import os
import time
import zlib
from dataclasses import dataclass, field

from ._version import __version__
from .corpus import (
    ABSTAIN,
    ScoredTriple,
    load_descriptions,
    load_gold,
    load_kb,
    load_kg_triples,
    load_sentences,
    load_stoplist,
    types_by_person,
    write_scores,
)
from .ensemble import EnsembleWeights, TripleScoreVector, combine, derive_weights
from .errors import StageError, TripleScoreError, ValidationError
from .evalharness import comparable_subset, evaluate, metric_acc, predictions_from_scores
from .factory import ScorerFactory
from .path_ranking import build_graph
from .score_mapping import map_scores, select_strategies
from .trigger import (
    PersonDescription,
    load_abbreviations,
    load_lexicon_assets,
    read_lexicon,
    refine,
    trigger_flags,
    twd_alone,
    write_lexicon,
)

logger = logging.getLogger(__name__)


@dataclass
class PipelineContext:
    """Loaded inputs shared by every stage

    Attributes
    ----------
    relation : TargetRelation
    texts : dict of person -> AssociatedText
    popularity : dict of person -> Popularity
    assertions : list of KbAssertion
        the task KB of ``relation``
    kb_types : dict of person -> tuple of types
    graph : KbGraph or None
        built from the KG triples when a KG file is configured
    descriptions : dict of person -> str
    gold, dev_gold : list of GoldTriple
    seed, jobs : int
    """

    relation: object
    texts: dict
    popularity: dict
    assertions: list
    kb_types: dict
    graph: object = None
    descriptions: dict = field(default_factory=dict)
    gold: list = field(default_factory=list)
    dev_gold: list = field(default_factory=list)
    seed: int = 0
    jobs: int = 1
    n_sentences: int = 0
    n_mentions: int = 0
    n_kg_triples: int = 0

    def requested_triples(self):
        """gold and dev triples when any are given, otherwise every KB assertion,
        as sorted (person, type) keys"""
        if self.gold or self.dev_gold:
            keys = {g.key for g in self.gold} | {g.key for g in self.dev_gold}
        else:
            keys = {(a.person, a.type) for a in self.assertions}
        return sorted(keys)

    def candidate_pairs(self, keys):
        """``keys`` plus every KB type of the persons in ``keys``, so that per-person
        maxima are taken over the full candidate set"""
        pairs = set(keys)
        for person in {p for p, _ in keys}:
            pairs.update((person, t) for t in self.kb_types.get(person, ()))
        return sorted(pairs)

    def type_ids(self):
        gold = self.gold + self.dev_gold
        return {a.type for a in self.assertions} | {g.assertion.type for g in gold}


def ingest(cfg, need_sentences=True):
    """Load and validate every configured input of the run"""
    kb_path, = cfg.require("kb")
    assertions = load_kb(kb_path, cfg.relation)
    gold = load_gold(cfg.require("gold")[0], cfg.relation) if cfg.inputs["gold"] else []
    dev_gold = (
        load_gold(cfg.require("dev_gold")[0], cfg.relation) if cfg.inputs["dev_gold"] else []
    )
    texts, popularity, n_sentences, n_mentions = {}, {}, 0, 0
    if need_sentences:
        sentences_path, = cfg.require("sentences")
        known = None
        if cfg.check_mentions:
            known = {a.person for a in assertions} | {g.assertion.person for g in gold + dev_gold}
        corpus, texts, popularity = load_sentences(
            sentences_path, load_stoplist(cfg.inputs["stoplist"]), known
        )
        n_sentences = len(corpus.sentences)
        n_mentions = corpus.total_mentions
    graph, n_kg = None, 0
    if cfg.inputs["kg"]:
        kg_path, = cfg.require("kg")
        persons = {a.person for a in assertions} if cfg.person_filter else None
        triples = load_kg_triples(kg_path, cfg.relation_blocklist, persons)
        graph = build_graph(triples)
        n_kg = graph.edge_count
    descriptions = {}
    if cfg.inputs["descriptions"]:
        descriptions = load_descriptions(cfg.require("descriptions")[0])
    logger.info(
        "ingested %d %s assertions, %d persons with text, %d KG triples",
        len(assertions),
        cfg.relation.value,
        len(texts),
        n_kg,
    )
    return PipelineContext(
        relation=cfg.relation,
        texts=texts,
        popularity=popularity,
        assertions=assertions,
        kb_types=types_by_person(assertions),
        graph=graph,
        descriptions=descriptions,
        gold=gold,
        dev_gold=dev_gold,
        seed=cfg.seed,
        jobs=cfg.jobs,
        n_sentences=n_sentences,
        n_mentions=n_mentions,
        n_kg_triples=n_kg,
    )


def ingest_summary(ctx):
    return {
        "relation": ctx.relation.value,
        "assertions": len(ctx.assertions),
        "persons": len(ctx.kb_types),
        "persons_with_text": len(ctx.texts),
        "sentences": ctx.n_sentences,
        "mentions": ctx.n_mentions,
        "kg_triples": ctx.n_kg_triples,
        "descriptions": len(ctx.descriptions),
        "gold_triples": len(ctx.gold),
        "dev_gold_triples": len(ctx.dev_gold),
    }


def model_path(out_dir, scorer, relation):
    return os.path.join(out_dir, "models", f"{scorer}.{relation.value}.npz")


def train_scorer(ctx, cfg, name):
    if name == "pathrank" and ctx.graph is None:
        raise ValidationError("path ranking needs a KG file (inputs.kg)")
    driver = ScorerFactory().scorer_factory(name, cfg.scorer_args(name))
    logger.info("training %s for %s", name, ctx.relation.value)
    return driver.train(ctx)


def score_with(ctx, driver, strategy, keys):
    """Raw and mapped scores of ``keys``; the raw scores cover every candidate type
    of each person so mapping sees the true per-person maximum"""
    raw = driver.score(ctx, ctx.candidate_pairs(keys))
    mapped = map_scores(raw, strategy)
    return {k: raw[k] for k in keys}, {k: mapped[k] for k in keys}


def write_raw_scores(path, raw, mapped):
    """person<TAB>type<TAB>raw<TAB>mapped, sorted by (person, type)"""
    with open(path, "w", encoding="utf-8") as handle:
        for key in sorted(raw):
            value = raw[key].value
            raw_text = ABSTAIN if value is None else repr(float(value))
            mapped_text = ABSTAIN if mapped[key] is None else str(mapped[key])
            handle.write(f"{key[0]}\t{key[1]}\t{raw_text}\t{mapped_text}\n")


def resolve_strategies(cfg, ctx, raw_by_scorer):
    """Mapping strategy per scorer: the configured table, or with
    ``run.select_mapping`` the strategy with the best development ACC"""
    if not cfg.select_mapping:
        return {name: cfg.mapping.strategy(name, ctx.relation) for name in raw_by_scorer}
    if not ctx.dev_gold:
        raise ValidationError("run.select_mapping needs development gold (inputs.dev_gold)")
    chosen = select_strategies(
        raw_by_scorer,
        {g.key: g.score for g in ctx.dev_gold},
        ctx.relation,
        lambda pairs: metric_acc(pairs, cfg.acc_tolerance),
    )
    for name in sorted(chosen):
        logger.info("%s maps with %s on %s", name, chosen[name].value, ctx.relation.value)
    return chosen


def resolve_weights(cfg, relation, dev_gold, mapped_by_scorer):
    """Explicit weights file, else development ACC, else equal weights"""
    if cfg.inputs["weights"]:
        with open(cfg.require("weights")[0], encoding="utf-8") as handle:
            weights = EnsembleWeights.from_dict(json.load(handle))
        missing = [s for s in mapped_by_scorer if s not in weights.for_relation(relation)]
        if missing:
            raise ValidationError(f"weights file has no entry for {', '.join(missing)}")
        return weights
    if dev_gold:
        dev_scores = {}
        for scorer, mapped in mapped_by_scorer.items():
            dev_scores[scorer] = [
                (ScoredTriple(g.assertion.person, relation, g.assertion.type, mapped.get(g.key)), g)
                for g in dev_gold
            ]
        return derive_weights(dev_scores, lambda pairs: metric_acc(pairs, cfg.acc_tolerance))
    logger.warning("no weights file and no development gold, using equal ensemble weights")
    return EnsembleWeights({relation: {s: 1.0 for s in mapped_by_scorer}})


def ensemble_scores(mapped_by_scorer, keys, relation, weights):
    combined = {}
    for person, type_id in keys:
        vec = TripleScoreVector(
            person,
            relation,
            type_id,
            {s: mapped.get((person, type_id)) for s, mapped in mapped_by_scorer.items()},
        )
        combined[(person, type_id)] = combine(vec, weights)
    return combined


def build_lexicon_for(cfg, relation, type_ids):
    """the configured lexicon file, or one assembled from the asset files"""
    if cfg.lexicon["lexicon"]:
        return read_lexicon(cfg.lexicon["lexicon"])
    return load_lexicon_assets(
        relation,
        type_ids,
        synonyms=cfg.lexicon["synonyms"],
        hyponyms=cfg.lexicon["hyponyms"],
        adjectives=cfg.lexicon["adjectives"],
        manual=cfg.lexicon["manual"],
        base_terms=cfg.lexicon["base_terms"],
    )


def compute_flags(descriptions, lexicon, keys, abbreviations=None):
    """(person, type) -> (in_first_sentence, in_description)"""
    if abbreviations is None:
        abbreviations = load_abbreviations()
    parsed = {
        person: PersonDescription.from_text(person, text, abbreviations)
        for person, text in descriptions.items()
    }
    return {(p, t): trigger_flags(lexicon, t, parsed.get(p)) for p, t in keys}


def refine_scores(scores, flags, relation):
    return {k: refine(s, relation, *flags[k]) for k, s in scores.items()}


def twd_alone_scores(flags, relation, seed):
    """trigger-only baseline; each triple's draw depends only on the seed and the triple"""
    return {
        (person, type_id): twd_alone(
            relation,
            *flags[(person, type_id)],
            seed=[seed, zlib.crc32(f"{person}\t{type_id}".encode("utf-8"))],
        )
        for person, type_id in sorted(flags)
    }


def ablation_table(mapped_by_scorer, weights, flags, gold, relation, seed=0, tolerance=2, min_group=2):
    """Metrics of every experiment configuration on the comparable subset.

    Configurations: each base scorer alone, the full ensemble, the ensemble
    without each scorer, the refined variants of those ensembles and the
    trigger-only baseline. Only gold triples scored by every base scorer count.

    Returns
    -------
    list of (name, MetricsReport)
    """
    scorers = sorted(mapped_by_scorer)
    per_scorer = {s: predictions_from_scores(mapped_by_scorer[s], relation) for s in scorers}
    subset = comparable_subset(*per_scorer.values()) & {g.key for g in gold}
    if not subset:
        raise ValidationError("no gold triple is scored by every base scorer")
    keys = sorted(subset)

    def report(scores):
        return evaluate(
            predictions_from_scores({k: scores[k] for k in keys}, relation),
            gold,
            subset=subset,
            tolerance=tolerance,
            min_group=min_group,
        )

    rows = [(s, report(mapped_by_scorer[s])) for s in scorers]
    ensembles = [("ensemble", scorers)]
    if len(scorers) > 1:
        ensembles += [(f"ensemble-{s}", [o for o in scorers if o != s]) for s in scorers]
    for name, members in ensembles:
        combined = ensemble_scores({s: mapped_by_scorer[s] for s in members}, keys, relation, weights)
        rows.append((name, report(combined)))
        rows.append((f"{name} (R)", report(refine_scores(combined, flags, relation))))
    rows.append(("twd-alone", report(twd_alone_scores({k: flags[k] for k in keys}, relation, seed))))
    return rows


def format_ablation(rows):
    lines = [f"{'configuration':<28} {'ACC':>7} {'ASD':>7} {'TAU':>7} {'triples':>8}"]
    for name, r in rows:
        lines.append(f"{name:<28} {r.acc:7.4f} {r.asd:7.4f} {r.tau:7.4f} {r.n_triples:8d}")
    return "\n".join(lines)


@dataclass
class PipelineResult:
    predictions: str
    manifest: str
    report: object = None
    ablation: list = None


class _Run:
    """Tracks the current stage and the files written so far"""

    def __init__(self, record_timing):
        self.stage = None
        self.written = []
        self.timing = {}
        self.record_timing = record_timing
        self._start = None

    def enter(self, stage):
        self._close()
        self.stage = stage
        self._start = time.perf_counter()
        logger.info("stage %s", stage)

    def _close(self):
        if self.stage is not None and self._start is not None:
            self.timing[self.stage] = round(time.perf_counter() - self._start, 3)

    def track(self, path):
        self.written.append(path)
        return path

    def cleanup(self):
        for path in reversed(self.written):
            if os.path.exists(path):
                os.remove(path)
                logger.info("removed partial output %s", path)


def _dump_json(path, payload):
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, sort_keys=True, indent=2)
        handle.write("\n")


def run_pipeline(cfg):
    """Train, score, map, combine, refine and evaluate in one go.

    Writes ``predictions.tsv``, one raw score file and one model file per scorer,
    ``weights.json``, ``manifest.json``, the trigger lexicon ``lexicon.tsv`` when
    refining and, with gold triples, ``metrics.json`` to ``cfg.out``.

    Raises
    ------
    StageError
        naming the failed stage; files written by the run are removed first
    """
    cfg.check_paths()
    os.makedirs(os.path.join(cfg.out, "models"), exist_ok=True)
    run = _Run(cfg.record_timing)
    try:
        return _run_stages(cfg, run)
    except (TripleScoreError, OSError, ValueError, KeyError) as err:
        if isinstance(err, StageError):
            raise
        stage = run.stage
        run.cleanup()
        raise StageError(stage, err) from err


def _run_stages(cfg, run):
    run.enter("ingest")
    ctx = ingest(cfg)
    keys = ctx.requested_triples()

    run.enter("train")
    drivers = {}
    for name in cfg.scorers:
        drivers[name] = train_scorer(ctx, cfg, name)
        drivers[name].save(run.track(model_path(cfg.out, name, ctx.relation)))

    run.enter("score")
    raw_by_scorer = {}
    for name, driver in drivers.items():
        raw_by_scorer[name] = driver.score(ctx, ctx.candidate_pairs(keys))

    run.enter("map")
    strategies = resolve_strategies(cfg, ctx, raw_by_scorer)
    mapped_by_scorer = {}
    for name, raw in raw_by_scorer.items():
        mapped = map_scores(raw, strategies[name])
        mapped_by_scorer[name] = {k: mapped[k] for k in keys}
        write_raw_scores(
            run.track(os.path.join(cfg.out, f"raw_{name}.tsv")),
            {k: raw[k] for k in keys},
            mapped_by_scorer[name],
        )

    run.enter("weights")
    weights = resolve_weights(cfg, ctx.relation, ctx.dev_gold, mapped_by_scorer)
    _dump_json(run.track(os.path.join(cfg.out, "weights.json")), weights.as_dict())

    run.enter("combine")
    scores = ensemble_scores(mapped_by_scorer, keys, ctx.relation, weights)

    run.enter("refine")
    flags = None
    if cfg.refine or cfg.ablation:
        lexicon = build_lexicon_for(cfg, ctx.relation, ctx.type_ids())
        write_lexicon(run.track(os.path.join(cfg.out, "lexicon.tsv")), lexicon)
        flags = compute_flags(ctx.descriptions, lexicon, keys, abbreviations_for(cfg))
    if cfg.refine:
        scores = refine_scores(scores, flags, ctx.relation)
    predictions = predictions_from_scores(scores, ctx.relation)
    predictions_path = run.track(os.path.join(cfg.out, "predictions.tsv"))
    write_scores(predictions_path, predictions)

    run.enter("evaluate")
    report, ablation = None, None
    if ctx.gold:
        report = evaluate(
            predictions,
            ctx.gold,
            allow_missing=cfg.allow_missing,
            tolerance=cfg.acc_tolerance,
            min_group=cfg.min_group,
        )
        _dump_json(run.track(os.path.join(cfg.out, "metrics.json")), report.to_dict())
        if cfg.ablation:
            ablation = ablation_table(
                mapped_by_scorer, weights, flags, ctx.gold, ctx.relation, cfg.seed,
                cfg.acc_tolerance, cfg.min_group,
            )
            _dump_json(
                run.track(os.path.join(cfg.out, "ablation.json")),
                {name: r.to_dict() for name, r in ablation},
            )
    run.enter("manifest")

    manifest = {
        "tool_version": __version__,
        "config": cfg.snapshot(),
        "model_hashes": {name: d.model_hash() for name, d in sorted(drivers.items())},
        "mapping": {name: s.value for name, s in sorted(strategies.items())},
        "ensemble_weights": weights.as_dict(),
        "triples": len(keys),
    }
    if report is not None:
        manifest["metrics"] = report.to_dict()
    if cfg.record_timing:
        manifest["timing"] = dict(run.timing)
    manifest_path = run.track(os.path.join(cfg.out, "manifest.json"))
    _dump_json(manifest_path, manifest)
    return PipelineResult(predictions_path, manifest_path, report, ablation)


def abbreviations_for(cfg):
    return load_abbreviations(cfg.lexicon["abbreviations"]) if cfg.lexicon["abbreviations"] else None
