"""
triplescore
Relevance scores (0-7) for type-like knowledge base triples!
"""

# Add imports here
from .scorer_driver import ScorerDriver, RawScore
from .text_scorers import WordClassificationDriver, WordCountingDriver, WordMleDriver
from .path_ranking import PathRankingDriver
from .factory import ScorerFactory
from .config import RunConfig, resolve_config
from .pipeline import run_pipeline

from ._version import __version__
