"""Exception types shared across the package."""


class CarlesonError(Exception):
    """Base class for every error raised by this library."""


class SizeError(CarlesonError):
    """A requested tree or bi-tree exceeds the configured size limit."""


class ShapeMismatchError(CarlesonError):
    """Operands were built over different tree shapes."""


class ValidationError(CarlesonError):
    """Malformed input data: measure files, node vectors, masses."""


class DomainError(CarlesonError):
    """A Bellman-domain constraint is violated; the message names it."""


class PreconditionError(CarlesonError):
    """An operation precondition (normalization, margin) does not hold."""
