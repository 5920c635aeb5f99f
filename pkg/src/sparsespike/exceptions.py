"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes: parameter-type errors exit 1,
numerical errors exit 2 and resource errors exit 3.
"""


class SparseSpikeError(Exception):
    """Base class for all library errors."""


class ParameterError(SparseSpikeError, ValueError):
    """An argument is outside its documented range."""


class DomainError(ParameterError):
    """A potential or threshold was evaluated outside its domain."""


class NumericalError(SparseSpikeError, ArithmeticError):
    """A numerical routine failed to reach its tolerance.

    ``diagnostics`` carries whatever the failing routine knew at the time
    (orders tried, last disagreement, ...).
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class SearchError(NumericalError):
    """A bracketing search found no sign change / jump in its bracket."""


class ResourceError(SparseSpikeError):
    """A computation would exceed a hard resource budget."""
