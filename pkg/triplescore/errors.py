"""Exception types raised across triplescore.

Every error carries enough context (file path, line number, stage name) for the
command line to report it without a traceback.
"""


class TripleScoreError(Exception):
    """Base class for all triplescore errors"""

    exit_code = 1


class FormatError(TripleScoreError, ValueError):
    """An input file violates its documented line format

    Attributes
    ----------
    path : str
        the file being parsed
    line_number : int
        1-based line number of the offending line (0 if not line-specific)
    """

    exit_code = 3

    def __init__(self, path, line_number, message):
        self.path = str(path)
        self.line_number = line_number
        super().__init__(f"{self.path}:{line_number}: {message}")


class ValidationError(TripleScoreError, ValueError):
    """An argument is outside the documented domain of an operation"""

    exit_code = 4


class TrainingError(TripleScoreError):
    """A model cannot be fit on the data it was given"""

    exit_code = 5


class StageError(TripleScoreError):
    """A pipeline stage failed; wraps the underlying cause"""

    exit_code = 6

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")
