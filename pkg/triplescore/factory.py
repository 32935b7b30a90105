from .scorer_driver import SCORER_NAMES, ScorerDriver

# child classes
from .text_scorers import WordClassificationDriver, WordCountingDriver, WordMleDriver
from .path_ranking import PathRankingDriver


class ScorerFactory:
    _drivers = {
        "wordclass": WordClassificationDriver,
        "wordcount": WordCountingDriver,
        "wordmle": WordMleDriver,
        "pathrank": PathRankingDriver,
    }

    def scorer_factory(self, scorer_name, args=None):
        cls = self._lookup(scorer_name)
        return cls(args or {})

    def load_scorer(self, scorer_name, path, args=None):
        cls = self._lookup(scorer_name)
        return cls.load(path, args or {})

    def _lookup(self, scorer_name):
        key = str(scorer_name).lower()
        if key not in self._drivers:
            raise TypeError(
                f"Scorer '{scorer_name}' not found, expected one of "
                + ", ".join(SCORER_NAMES)
            )
        cls = self._drivers[key]
        if not issubclass(cls, ScorerDriver):
            raise TypeError(f"{cls} is not a ScorerDriver")
        return cls
