"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """Argument outside an operation's domain (bad index, shape, non-finite value)."""


class UnsupportedSpecError(InvalidInputError):
    """Request that is well-formed but not supported (e.g. sum_coupled with K != 2)."""


class ParseError(ValueError):
    """Malformed dataset file. ``line`` is 1-based, or None when not line-specific."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class IncompleteGridError(ParseError):
    """Dataset is a strict subset of the declared factorial grid."""


class DegenerateSubgroupError(ArithmeticError):
    """Orbit-centered embeddings for a subgroup have zero variability."""


class DegenerateProjectionError(ArithmeticError):
    """Projection onto the unit circle requested for a (near-)zero vector."""


class TrainingError(RuntimeError):
    pass
