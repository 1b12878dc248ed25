"""Error taxonomy shared across the package."""


class LpmError(Exception):
    """Base class for all analysis errors."""


class EmptyInputError(LpmError):
    """An operation received no usable data."""


class DegenerateDesignError(LpmError):
    """An estimation problem is under-determined (e.g. <2 distinct b-values)."""


class BinningMismatchError(LpmError):
    """Histogram and model were built on different bin grids."""


class OverParameterisedError(LpmError):
    """Model has at least as many free parameters as informative cells."""


class SelectionFailedError(LpmError):
    """Every candidate model in a selection sweep was degenerate."""

    def __init__(self, message, curve=None):
        super().__init__(message)
        self.curve = curve


class DegenerateVarianceError(LpmError):
    """Both samples in a two-sample test have zero variance."""


class UndefinedSummaryError(LpmError):
    """A summary statistic is undefined (e.g. zero-count timepoint)."""


class InputFormatError(LpmError):
    """A file failed structural validation (missing columns, bad header...)."""
