"""Exception taxonomy shared across the toolkit."""


class McxError(Exception):
    """Base class for all toolkit errors."""


class DegenerateGraphError(McxError):
    """Graph too small or otherwise structurally degenerate."""


class EmptySpaceError(McxError):
    """An operation received an empty state set."""


class ErgodicityError(McxError):
    """The requested chain would not be irreducible."""


class CapacityError(McxError):
    """Instance size exceeds the supported exact-computation range."""


class DimensionError(McxError):
    """Function or vector does not match the state space it is used with."""


class UnsupportedOperatorError(McxError):
    """Operation requires structure (e.g. reversibility) the kernel lacks."""


class ParameterError(McxError):
    """A numeric parameter is outside its admissible domain."""


class ExtensionMismatchError(McxError):
    """A would-be extension disagrees with the function on the inner space."""


class SchemeValidationError(McxError):
    """An extension scheme violates one of its structural invariants."""

    def __init__(self, violations):
        self.violations = list(violations)
        lines = "; ".join(v.describe() for v in self.violations[:5])
        more = "" if len(self.violations) <= 5 else f" (+{len(self.violations) - 5} more)"
        super().__init__(f"invalid extension scheme: {lines}{more}")


class IncompleteFlowError(McxError):
    """A pair that carries coupling mass has no flow assigned."""


class StructureMismatchError(McxError):
    """Kernel pair does not have the shape a specialised routine requires."""


class ModeViolationError(McxError):
    """Scheme mode (difference vs sum form) does not admit the request."""


class RangeError(McxError):
    """Requested index or threshold lies outside the computed range."""


class ConfigError(McxError):
    """Experiment configuration failed schema validation."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"config field '{field}': {message}")
