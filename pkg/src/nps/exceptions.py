"""Exception hierarchy.

Every error raised on purpose by this package derives from ``NPSError`` so
callers (and the CLI) can map failures onto distinct exit codes.
"""


class NPSError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(NPSError, ValueError):
    """An argument is outside its documented domain."""


class StructuralMismatchError(NPSError, ValueError):
    """Two parameter layouts differ in tensor names, shapes or order."""

    def __init__(self, message, tensor=None):
        super().__init__(message)
        self.tensor = tensor


class ParseError(NPSError):
    """A serialized checkpoint or bundle could not be decoded."""


class BadMagicError(ParseError):
    pass


class VersionMismatchError(ParseError):
    pass


class TruncatedPayloadError(ParseError):
    pass


class NonFiniteValueError(ParseError):
    pass


class TaskNotFoundError(NPSError, KeyError):
    """A bundle has no entry with the requested task name."""

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class DegenerateCoefficientsError(InvalidArgumentError):
    """Fusion coefficients sum to zero."""


class NumericError(NPSError, ArithmeticError):
    """A numerical routine failed (decomposition, divergence, ...)."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class TrainingError(NumericError):
    """Training diverged (non-finite loss)."""


class SearchAbortedError(NPSError):
    """The objective raised during a search; ``history`` holds completed generations."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history or [])
