"""Run configuration.

A config file is flat INI text with one section per module::

    [inputs]
    sentences = data/sentences.tsv
    kb = data/profession.kb

    [pathrank]
    n_trees = 50

    [mapping]
    wordclass.profession = maplog

Sections and keys are flattened into ``section.key`` entries of an args
dictionary; RunConfig reads that dictionary the same way the scorer drivers read
theirs, falling back to a default for every absent key.
"""
import configparser
import logging
import os

from .corpus import TargetRelation
from .errors import ValidationError
from .score_mapping import MappingTable
from .scorer_driver import SCORER_NAMES

logger = logging.getLogger(__name__)

CONFIG_ENV = "TRIPLESCORE_CONFIG"

INPUT_KEYS = (
    "sentences", "kb", "kg", "descriptions", "gold", "dev_gold", "weights", "stoplist",
)
LEXICON_KEYS = ("lexicon", "synonyms", "hyponyms", "adjectives", "manual", "base_terms", "abbreviations")


def as_bool(value):
    if isinstance(value, str):
        return value.strip().lower() in ("1", "true", "yes", "on")
    return bool(value)


def _as_list(value):
    if isinstance(value, str):
        return tuple(v.strip() for v in value.split(",") if v.strip())
    return tuple(value)


def load_config(path):
    """read an INI config file into a flat ``section.key`` args dictionary"""
    if not os.path.exists(path):
        raise FileNotFoundError(f"config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as err:
        raise ValidationError(f"{path}: {err}") from None
    args = {}
    for section in parser.sections():
        for key, value in parser.items(section):
            args[f"{section}.{key}".lower()] = value
    return args


def resolve_config(config_path=None, overrides=None):
    """RunConfig from a config file (or $TRIPLESCORE_CONFIG) with flag overrides applied"""
    path = config_path or os.environ.get(CONFIG_ENV)
    args = load_config(path) if path else {}
    if path:
        logger.info("read configuration from %s", path)
    for key, value in (overrides or {}).items():
        if value is not None:
            args[key.lower()] = value
    return RunConfig(args)


class RunConfig:
    """Everything a run needs: inputs, enabled scorers, knobs and seeds

    Attributes
    ----------
    inputs : dict of str -> str or None
        sentences, kb, kg, descriptions, gold, dev_gold, weights and stoplist paths
    lexicon : dict of str -> str or None
        trigger lexicon file or the asset files it is assembled from
    relation : TargetRelation
    scorers : tuple of str
        enabled base scorers
    mapping : MappingTable
    check_mentions : bool
        reject sentence mentions of persons outside the KB and gold files
    select_mapping : bool
        replace the mapping table by the strategies with the best development ACC
    seed, jobs : int
    refine : bool
        apply trigger-word refinement
    out : str
        output directory
    """

    def __init__(self, args):
        args = {k.lower(): v for k, v in args.items()}
        self.parse_input(args)

    def parse_input(self, args):
        self.args = dict(args)
        self.inputs = {k: args.get(f"inputs.{k}") or None for k in INPUT_KEYS}
        self.lexicon = {k: args.get(f"lexicon.{k}") or None for k in LEXICON_KEYS}

        if "run.relation" in args:
            self.relation = TargetRelation.parse(args["run.relation"])
        else:
            self.relation = TargetRelation.PROFESSION

        if "run.scorers" in args:
            self.scorers = tuple(s.lower() for s in _as_list(args["run.scorers"]))
        else:
            self.scorers = SCORER_NAMES
        unknown = [s for s in self.scorers if s not in SCORER_NAMES]
        if unknown or not self.scorers:
            raise ValidationError(
                f"run.scorers must name some of {', '.join(SCORER_NAMES)}, got {self.scorers}"
            )

        if "run.seed" in args:
            self.seed = int(args["run.seed"])
        else:
            self.seed = 0

        if "run.jobs" in args:
            self.jobs = int(args["run.jobs"])
        else:
            self.jobs = 1

        if "run.refine" in args:
            self.refine = as_bool(args["run.refine"])
        else:
            self.refine = True

        if "run.out" in args:
            self.out = str(args["run.out"])
        else:
            self.out = "triplescore_out"

        if "run.allow_missing" in args:
            self.allow_missing = as_bool(args["run.allow_missing"])
        else:
            self.allow_missing = False

        if "run.ablation" in args:
            self.ablation = as_bool(args["run.ablation"])
        else:
            self.ablation = False

        if "run.check_mentions" in args:
            self.check_mentions = as_bool(args["run.check_mentions"])
        else:
            self.check_mentions = True

        if "run.select_mapping" in args:
            self.select_mapping = as_bool(args["run.select_mapping"])
        else:
            self.select_mapping = False

        if "run.record_timing" in args:
            self.record_timing = as_bool(args["run.record_timing"])
        else:
            self.record_timing = False

        if "evaluate.acc_tolerance" in args:
            self.acc_tolerance = int(args["evaluate.acc_tolerance"])
        else:
            self.acc_tolerance = 2

        if "evaluate.min_group" in args:
            self.min_group = int(args["evaluate.min_group"])
        else:
            self.min_group = 2

        if "pathrank.relation_blocklist" in args:
            self.relation_blocklist = _as_list(args["pathrank.relation_blocklist"])
        else:
            self.relation_blocklist = ("/base/", "/common/")

        if "pathrank.person_filter" in args:
            self.person_filter = as_bool(args["pathrank.person_filter"])
        else:
            self.person_filter = False

        self.mapping = MappingTable.from_overrides(
            {k[len("mapping."):]: v for k, v in args.items() if k.startswith("mapping.")}
        )

        if self.seed < 0 or self.seed >= 2**64:
            raise ValidationError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        for name in ("jobs", "acc_tolerance", "min_group"):
            if getattr(self, name) < (0 if name == "acc_tolerance" else 1):
                raise ValidationError(f"{name} must be positive, got {getattr(self, name)}")
        self._scorer_args = self._collect_scorer_args(args)

    def _collect_scorer_args(self, args):
        def pick(mapping):
            return {dest: args[src] for dest, src in mapping.items() if src in args}

        scorer_args = {
            "wordclass": pick(
                {
                    "vocab_cap": "features.classification_vocab",
                    "bucket_cap": "features.bucket_cap",
                    "cv_folds": "classification.cv_folds",
                    "grid_size": "classification.grid_size",
                }
            ),
            "wordcount": pick({"vocab_cap": "features.counting_vocab"}),
            "wordmle": pick(
                {
                    "vocab_cap": "features.classification_vocab",
                    "pseudo_sample_size": "mle.pseudo_sample_size",
                    "max_iter": "mle.max_iter",
                    "tol": "mle.tol",
                }
            ),
            "pathrank": pick(
                {
                    "n_trees": "pathrank.n_trees",
                    "top_n": "pathrank.top_n",
                    "max_len": "pathrank.max_len",
                    "inverse_edges": "pathrank.inverse_edges",
                    "min_professions": "pathrank.min_professions",
                    "relation_label": "pathrank.relation_label",
                }
            ),
        }
        for name, knobs in scorer_args.items():
            for key, value in knobs.items():
                if key not in ("inverse_edges", "relation_label", "tol", "min_professions") and int(value) < 1:
                    raise ValidationError(f"{name} knob {key} must be positive, got {value}")
        return scorer_args

    def scorer_args(self, name):
        return dict(self._scorer_args[name])

    def require(self, *keys):
        """input paths that must be configured and exist; returns them in order"""
        paths = []
        for key in keys:
            path = self.inputs.get(key)
            if not path:
                raise ValidationError(f"no '{key}' input configured (inputs.{key})")
            if not os.path.exists(path):
                raise FileNotFoundError(f"input file not found: {path}")
            paths.append(path)
        return paths

    def check_paths(self):
        """every configured input and lexicon path must exist"""
        for group in (self.inputs, self.lexicon):
            for path in group.values():
                if path and not os.path.exists(path):
                    raise FileNotFoundError(f"input file not found: {path}")

    def snapshot(self):
        """config as recorded in the run manifest; the worker count is left out
        because it never changes the predictions"""
        return {
            "inputs": {k: v for k, v in sorted(self.inputs.items()) if v},
            "lexicon": {k: v for k, v in sorted(self.lexicon.items()) if v},
            "relation": self.relation.value,
            "scorers": list(self.scorers),
            "seed": self.seed,
            "refine": self.refine,
            "allow_missing": self.allow_missing,
            "acc_tolerance": self.acc_tolerance,
            "min_group": self.min_group,
            "relation_blocklist": list(self.relation_blocklist),
            "person_filter": self.person_filter,
            "check_mentions": self.check_mentions,
            "select_mapping": self.select_mapping,
            "mapping": self.mapping.as_dict(),
            "scorer_args": {
                name: {k: str(v) for k, v in sorted(knobs.items())}
                for name, knobs in sorted(self._scorer_args.items())
            },
        }
