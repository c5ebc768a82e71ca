"""Exception hierarchy shared by every module.

Domain errors subclass ``ValueError`` so callers that only care about bad
input can catch that. The CLI maps ``ParseError``/``ConfigError`` to exit
code 2 and every other ``PGDError`` to exit code 3.
"""


class PGDError(Exception):
    """Base class for all library errors."""


class NonPositiveDepth(PGDError, ValueError):
    pass


class HorizonSingular(PGDError, ValueError):
    """The destination center sits on (or too close to) the horizon line."""


class BadRange(PGDError, ValueError):
    pass


class DimensionMismatch(PGDError, ValueError):
    pass


class NonFiniteLogit(PGDError, ValueError):
    pass


class ZeroVector(PGDError, ValueError):
    pass


class NoGeometry(PGDError, LookupError):
    """A node has no usable in-edges, so no geometric depth exists for it."""


class EmptyInput(PGDError, ValueError):
    pass


class DegenerateBox(PGDError, ValueError):
    pass


class NoGroundTruth(PGDError, ValueError):
    """AP is undefined when the class has no (non-ignored) ground truth."""


class InfeasibleSpec(PGDError, RuntimeError):
    pass


class IdMismatch(PGDError, KeyError):
    pass


class ParseError(PGDError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConfigError(PGDError, ValueError):
    pass
