"""Exception types shared across the simulator."""


class FgsError(Exception):
    """Base class for all simulator errors."""


class SchemaViolation(FgsError):
    """A triple's endpoint types do not match the relation signature."""


class SelfLoop(FgsError):
    """A triple connects a node to itself."""


class TooFewEdges(FgsError):
    """A relation has too few edges to be split into train/valid/test."""


class ExhaustedCandidates(FgsError):
    """Negative sampling ran out of type-consistent non-edges."""


class EmptyRelation(FgsError):
    """The requested relation has no edges in the graph."""


class UnknownNode(FgsError):
    """A node id is not present in the graph."""


class Infeasible(FgsError):
    """A generation request exceeds the candidate-pair capacity."""


class DimensionMismatch(FgsError):
    """Vector/matrix dimensions are inconsistent."""


class ShapeMismatch(FgsError):
    """Parameter collections disagree in shape or structure."""


class LengthMismatch(FgsError):
    """Paired sequences have different lengths."""


class EmptyInput(FgsError):
    """An operation that needs at least one element received none."""


class DegenerateLabels(FgsError):
    """A scored set lacks the positive/negative examples a metric needs."""


class InvalidTable(FgsError):
    """A rank table violates its structural requirements."""


class UnsupportedK(FgsError):
    """No tabulated critical constant for this many models."""


class ConfigError(FgsError):
    """A run configuration is missing, malformed, or inconsistent."""


class ParseError(FgsError):
    """A text input (graph or profile file) could not be parsed."""
