"""
Exception hierarchy for the separation toolkit.
Every error the pipeline raises on purpose derives from BssError.
"""


class BssError(Exception):
    """Base class for toolkit errors"""


class InvalidArgumentError(BssError, ValueError):
    pass


class UnsupportedFormatError(BssError):
    pass


class WavParseError(BssError):
    pass


class SignalIOError(BssError, OSError):
    pass


class DegenerateWindowError(BssError):
    pass


class NumericalRankError(BssError):
    pass


class UndefinedContrastError(BssError):
    pass


class DegeneratePolynomialError(BssError):
    pass


class NoStepError(BssError):
    pass


class SizeLimitError(BssError):
    pass


class UndefinedMetricError(BssError):
    pass


class StageError(BssError):
    """A pipeline stage failed; carries the stage name and, for per-bin stages, the bin"""

    def __init__(self, stage: str, cause: BaseException, bin_index: int | None = None):
        self.stage = stage
        self.cause = cause
        self.bin_index = bin_index
        where = f"stage '{stage}'" if bin_index is None else f"stage '{stage}' at bin {bin_index}"
        super().__init__(f"{where} failed: {cause}")
