"""Exception types shared across the package."""


class GraphShieldError(Exception):
    """Base class for all package-specific errors."""


class ParseError(GraphShieldError):
    """Malformed wire-format input. ``offset`` is the byte offset when known."""

    def __init__(self, message: str, offset: int | None = None):
        super().__init__(message if offset is None else f"{message} (byte offset {offset})")
        self.offset = offset


class ValidationError(GraphShieldError):
    """A document violates its invariants. Carries every violation found."""

    def __init__(self, violations):
        self.violations = tuple(violations)
        super().__init__("; ".join(str(v) for v in self.violations))


class RangeError(GraphShieldError):
    """A numeric argument is outside its allowed range."""


class ConfigError(GraphShieldError):
    """A configuration value violates its contract."""


class ShapeError(GraphShieldError):
    """Array or sequence shapes do not agree."""


class NumericError(GraphShieldError):
    """Non-finite values where finite ones are required."""


class EmptyCorpusError(GraphShieldError):
    """A corpus with no sequences was supplied."""


class EmptyBlockError(GraphShieldError):
    """A basic block with no opcodes cannot be embedded."""


class EmptyFunctionError(GraphShieldError):
    """A function with no instructions cannot be embedded."""


class DegenerateMatrixError(GraphShieldError):
    """An all-zero matrix has no principal direction."""


class DegenerateDatasetError(GraphShieldError):
    """The dataset lacks a class or is empty where both classes are required."""


class NotTrainedError(GraphShieldError):
    """A trained parameter set was required but an untrained one was given."""
