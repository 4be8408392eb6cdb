"""Exception hierarchy shared by all mixlds modules."""


class MixLdsError(Exception):
    """Base class for every error raised by this package."""


class DimensionMismatch(MixLdsError, ValueError):
    pass


class UnstableModel(MixLdsError):
    pass


class NoConvergence(MixLdsError):
    pass


class SingularGamma(MixLdsError):
    pass


class NonPsdResidual(MixLdsError):
    pass


class InvalidRho(MixLdsError, ValueError):
    pass


class TooShort(MixLdsError, ValueError):
    pass


class EmptyInput(MixLdsError, ValueError):
    pass


class IndexOutOfRange(MixLdsError, IndexError):
    pass


class InvalidK(MixLdsError, ValueError):
    pass


class EmptyGrid(MixLdsError, ValueError):
    pass


class TooManyClusters(MixLdsError, ValueError):
    pass


class SingularNormalMatrix(MixLdsError):
    pass


class SingularW(MixLdsError):
    pass


class InvalidPermutation(MixLdsError, ValueError):
    pass


class SizeMismatch(MixLdsError, ValueError):
    pass


class TooManyModels(MixLdsError, ValueError):
    pass


class MissingSubset(MixLdsError):
    pass


class ConfigParse(MixLdsError):
    pass


class RaggedCsv(MixLdsError):
    pass


class StageError(MixLdsError):
    """Wraps an error raised inside one stage of the two-stage pipeline."""

    def __init__(self, stage, cause):
        super().__init__(f"{stage} stage failed: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause
