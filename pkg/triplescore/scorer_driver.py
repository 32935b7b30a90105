import math
from abc import abstractmethod, ABC
from dataclasses import dataclass

from .errors import ValidationError

PROBABILITY = "probability"
WEIGHTED_SUM = "weighted_sum"

SCORER_NAMES = ("wordclass", "wordcount", "wordmle", "pathrank")


@dataclass(frozen=True)
class RawScore:
    """Unmapped output of a base scorer

    Attributes
    ----------
    value : float or None
        the raw value; None when the scorer abstains
    kind : str
        "probability" (value in [0, 1]) or "weighted_sum" (value >= 0)
    """

    value: object
    kind: str

    def __post_init__(self):
        if self.kind not in (PROBABILITY, WEIGHTED_SUM):
            raise ValidationError(f"unknown raw score kind '{self.kind}'")
        if self.value is None:
            return
        if not math.isfinite(self.value):
            raise ValidationError(f"raw score {self.value} is not finite")
        if self.kind == PROBABILITY and not 0.0 <= self.value <= 1.0:
            raise ValidationError(f"probability {self.value} outside [0, 1]")

    @classmethod
    def abstain(cls, kind):
        return cls(None, kind)

    @property
    def abstained(self):
        return self.value is None


class ScorerDriver(ABC):
    """Common surface of the four base scorers.

    A driver is trained once on a PipelineContext, then scores (person, type)
    pairs to RawScore values; the raw values are mapped to 0-7 elsewhere.
    """

    #: short name used in config keys, CLI arguments and file names
    name = None
    #: kind of RawScore the driver emits
    kind = None

    @abstractmethod
    def train(self, context):
        pass

    @abstractmethod
    def score(self, context, pairs):
        """return a dict (person, type) -> RawScore for every requested pair"""
        pass

    @abstractmethod
    def save(self, path):
        pass

    @classmethod
    @abstractmethod
    def load(cls, path, args=None):
        pass

    @abstractmethod
    def model_hash(self):
        pass
