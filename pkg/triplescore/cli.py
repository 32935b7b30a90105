"""Command-line entry point: ``triplescore <subcommand> [options]``.

Every subcommand reads its inputs from a config file (``--config`` or
$TRIPLESCORE_CONFIG) and accepts flags that override single config keys.
"""
import argparse
import json
import logging
import os
import sys

from ._version import __version__
from .config import resolve_config
from .corpus import load_descriptions, load_gold, load_scores, write_scores
from .errors import StageError, TripleScoreError, ValidationError
from .evalharness import WorldConfig, comparable_subset, evaluate, generate_world, predictions_from_scores
from .factory import ScorerFactory
from .pipeline import (
    abbreviations_for,
    build_lexicon_for,
    compute_flags,
    ensemble_scores,
    format_ablation,
    ingest,
    ingest_summary,
    model_path,
    refine_scores,
    resolve_weights,
    run_pipeline,
    score_with,
    train_scorer,
    twd_alone_scores,
    write_raw_scores,
)
from .scorer_driver import SCORER_NAMES

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_STAGE = 6
EXIT_MISSING_FILE = 7

# flag destination -> config key
FLAG_KEYS = {
    "seed": "run.seed",
    "relation": "run.relation",
    "jobs": "run.jobs",
    "sentences": "inputs.sentences",
    "kb": "inputs.kb",
    "kg": "inputs.kg",
    "descriptions": "inputs.descriptions",
    "gold": "inputs.gold",
    "dev_gold": "inputs.dev_gold",
    "weights": "inputs.weights",
    "stoplist": "inputs.stoplist",
    "lexicon": "lexicon.lexicon",
    "scorers": "run.scorers",
    "allow_missing": "run.allow_missing",
    "ablation": "run.ablation",
    "select_mapping": "run.select_mapping",
}


def _common_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI config file (default: $TRIPLESCORE_CONFIG)")
    common.add_argument("--seed", type=int, help="random seed, unsigned 64-bit")
    common.add_argument("--relation", choices=("profession", "nationality"))
    common.add_argument("--out", help="output file or directory, depending on the subcommand")
    common.add_argument("--jobs", type=int, help="worker count")
    common.add_argument("-v", "--verbose", action="count", default=0)
    common.add_argument("-q", "--quiet", action="store_true")
    inputs = common.add_argument_group("inputs")
    for name in ("sentences", "kb", "kg", "descriptions", "gold", "dev-gold", "weights", "stoplist", "lexicon"):
        inputs.add_argument(f"--{name}")
    return common


def build_parser():
    common = _common_parser()
    parser = argparse.ArgumentParser(
        prog="triplescore", description="Relevance scores for type-like KB triples."
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    p = sub.add_parser("ingest", parents=[common], help="validate inputs and write a summary")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train", parents=[common], help="train one base scorer and save it")
    p.add_argument("scorer", choices=SCORER_NAMES)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("score", parents=[common], help="raw and mapped scores of one scorer")
    p.add_argument("scorer", choices=SCORER_NAMES)
    p.add_argument("--model", help="saved model; trained from the inputs when omitted")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("ensemble", parents=[common], help="combine mapped scores of several scorers")
    p.add_argument(
        "--scores", action="append", required=True, metavar="SCORER=PATH",
        help="raw score file of a scorer, repeatable",
    )
    p.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("refine", parents=[common], help="apply trigger-word refinement")
    p.add_argument("--pred", required=True, help="prediction file to refine")
    p.add_argument("--twd-alone", action="store_true", help="write the trigger-only baseline instead")
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("evaluate", parents=[common], help="ACC, ASD and TAU of a prediction file")
    p.add_argument("--pred", required=True)
    p.add_argument("--allow-missing", action="store_true", default=None)
    p.add_argument(
        "--subset-of", action="append", default=[], metavar="PATH",
        help="restrict to triples scored in every given raw score file",
    )
    p.add_argument("--tolerance", type=int, help="ACC tolerance (default 2)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("pipeline", parents=[common], help="run every stage and write a manifest")
    p.add_argument("--scorers", help="comma separated subset of " + ",".join(SCORER_NAMES))
    p.add_argument("--no-refine", action="store_true")
    p.add_argument("--ablation", action="store_true", default=None)
    p.add_argument(
        "--select-mapping", action="store_true", default=None,
        help="choose each scorer's mapping on the development gold",
    )
    p.add_argument("--allow-missing", action="store_true", default=None)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("generate-world", parents=[common], help="write a synthetic world")
    p.add_argument("--persons", type=int, default=60)
    p.add_argument("--professions", type=int, default=6)
    p.add_argument("--nationalities", type=int, default=4)
    p.add_argument("--sharpness", type=float, default=1.0)
    p.add_argument("--plant-probability", type=float, default=1.0)
    p.set_defaults(func=cmd_generate_world)
    return parser


def _config(args, **extra):
    overrides = {}
    for dest, key in FLAG_KEYS.items():
        value = getattr(args, dest, None)
        if value is not None:
            overrides[key] = value
    overrides.update(extra)
    return resolve_config(args.config, overrides)


def _out(args, default):
    path = args.out or default
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    return path


def cmd_ingest(args):
    cfg = _config(args)
    summary = ingest_summary(ingest(cfg))
    text = json.dumps(summary, sort_keys=True, indent=2)
    if args.out:
        with open(_out(args, args.out), "w", encoding="utf-8") as handle:
            handle.write(text + "\n")
    print(text)


def cmd_train(args):
    cfg = _config(args)
    ctx = ingest(cfg, need_sentences=args.scorer != "pathrank")
    driver = train_scorer(ctx, cfg, args.scorer)
    path = _out(args, model_path(cfg.out, args.scorer, cfg.relation))
    driver.save(path)
    print(f"{args.scorer} model written to {path} (hash {driver.model_hash()})")


def cmd_score(args):
    cfg = _config(args)
    ctx = ingest(cfg, need_sentences=args.scorer != "pathrank")
    if args.model:
        driver = ScorerFactory().load_scorer(args.scorer, args.model, cfg.scorer_args(args.scorer))
    else:
        driver = train_scorer(ctx, cfg, args.scorer)
    keys = ctx.requested_triples()
    raw, mapped = score_with(ctx, driver, cfg.mapping.strategy(args.scorer, cfg.relation), keys)
    path = _out(args, os.path.join(cfg.out, f"raw_{args.scorer}.tsv"))
    write_raw_scores(path, raw, mapped)
    print(f"scored {len(keys)} triples with {args.scorer}, written to {path}")


def _parse_score_specs(specs):
    files = {}
    for spec in specs:
        name, sep, path = spec.partition("=")
        if not sep or name not in SCORER_NAMES or not path:
            raise ValidationError(f"--scores expects SCORER=PATH with SCORER in {', '.join(SCORER_NAMES)}")
        files[name] = path
    return files


def cmd_ensemble(args):
    cfg = _config(args)
    mapped_by_scorer = {}
    for name, path in _parse_score_specs(args.scores).items():
        mapped_by_scorer[name] = {t.key: t.score for t in load_scores(path, cfg.relation, column=3)}
    keys = sorted({k for mapped in mapped_by_scorer.values() for k in mapped})
    dev_gold = load_gold(cfg.require("dev_gold")[0], cfg.relation) if cfg.inputs["dev_gold"] else []
    weights = resolve_weights(cfg, cfg.relation, dev_gold, mapped_by_scorer)
    logger.info("ensemble weights: %s", weights.as_dict())
    scores = ensemble_scores(mapped_by_scorer, keys, cfg.relation, weights)
    path = _out(args, os.path.join(cfg.out, "ensemble.tsv"))
    write_scores(path, predictions_from_scores(scores, cfg.relation))
    print(f"combined {len(mapped_by_scorer)} scorers over {len(keys)} triples, written to {path}")


def cmd_refine(args):
    cfg = _config(args)
    predictions = load_scores(args.pred, cfg.relation)
    scores = {}
    for t in predictions:
        if t.score is None:
            raise ValidationError(f"{args.pred}: cannot refine an abstained triple {t.person} {t.type}")
        scores[t.key] = t.score
    descriptions = load_descriptions(cfg.require("descriptions")[0])
    lexicon = build_lexicon_for(cfg, cfg.relation, {t.type for t in predictions})
    flags = compute_flags(descriptions, lexicon, sorted(scores), abbreviations_for(cfg))
    if args.twd_alone:
        scores = twd_alone_scores(flags, cfg.relation, cfg.seed)
    else:
        scores = refine_scores(scores, flags, cfg.relation)
    path = _out(args, os.path.join(cfg.out, "refined.tsv"))
    write_scores(path, predictions_from_scores(scores, cfg.relation))
    print(f"refined {len(scores)} triples, written to {path}")


def cmd_evaluate(args):
    extra = {}
    if args.tolerance is not None:
        extra["evaluate.acc_tolerance"] = args.tolerance
    cfg = _config(args, **extra)
    gold_path, = cfg.require("gold")
    predictions = load_scores(args.pred, cfg.relation)
    subset = None
    if args.subset_of:
        subset = comparable_subset(*[load_scores(p, cfg.relation, column=3) for p in args.subset_of])
    report = evaluate(
        predictions,
        load_gold(gold_path, cfg.relation),
        allow_missing=cfg.allow_missing,
        subset=subset,
        tolerance=cfg.acc_tolerance,
        min_group=cfg.min_group,
    )
    if args.out:
        with open(_out(args, args.out), "w", encoding="utf-8") as handle:
            handle.write(report.to_json())
    print(report.format_table(f"{cfg.relation.value}: {args.pred}"))


def cmd_pipeline(args):
    extra = {}
    if args.no_refine:
        extra["run.refine"] = "false"
    if args.out:
        extra["run.out"] = args.out
    cfg = _config(args, **extra)
    result = run_pipeline(cfg)
    print(f"predictions written to {result.predictions}")
    print(f"manifest written to {result.manifest}")
    if result.report is not None:
        print(result.report.format_table(cfg.relation.value))
    if result.ablation:
        print(format_ablation(result.ablation))


def cmd_generate_world(args):
    cfg = WorldConfig(
        n_persons=args.persons,
        n_professions=args.professions,
        n_nationalities=args.nationalities,
        sharpness=args.sharpness,
        plant_probability=args.plant_probability,
        seed=args.seed if args.seed is not None else 0,
    )
    files = generate_world(cfg, args.out or "world")
    print(f"world written to {os.path.dirname(files.sentences) or '.'}")


def _exit_code(err):
    if isinstance(err, FileNotFoundError):
        return EXIT_MISSING_FILE
    if isinstance(err, StageError):
        return EXIT_MISSING_FILE if isinstance(err.cause, FileNotFoundError) else err.exit_code
    if isinstance(err, TripleScoreError):
        return err.exit_code
    return EXIT_STAGE


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING
    if args.quiet:
        level = logging.ERROR
    elif args.verbose == 1:
        level = logging.INFO
    elif args.verbose > 1:
        level = logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (TripleScoreError, OSError) as err:
        logger.error("%s", err)
        return _exit_code(err)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
