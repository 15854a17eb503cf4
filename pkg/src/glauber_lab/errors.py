"""Exception types shared across the package.

Every error raised on purpose derives from :class:`LabError` so callers (and
the command line runner) can separate user-facing failures from bugs.
"""


class LabError(Exception):
    """Base class for all expected failures."""


class ConfigError(LabError):
    """Malformed input: bad config, bad file, bad parameter."""


class GraphError(ConfigError):
    pass


class DuplicateEdge(GraphError):
    pass


class SelfLoop(GraphError):
    pass


class VertexOutOfRange(GraphError):
    pass


class EmptyEdgeSet(GraphError):
    pass


class SizeOutOfRange(ConfigError):
    pass


class GraphFormatError(GraphError):
    """Graph file could not be parsed; ``line`` is 1-based."""

    def __init__(self, message, line=None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


class NotATree(GraphError):
    pass


class InstanceTooLarge(LabError):
    """Exact computation would exceed a configured cap."""


class PathTreeTooLarge(InstanceTooLarge):
    pass


class NonPositiveParameter(ConfigError):
    pass


class ParameterOutOfRange(ConfigError):
    pass


class DegreeTooSmall(ParameterOutOfRange):
    pass


class NotAntiferromagnetic(ParameterOutOfRange):
    pass


class ThetaTooLarge(ParameterOutOfRange):
    pass


class NTooSmall(ParameterOutOfRange):
    pass


class FixedPointNoConverge(LabError):
    pass


class EmptySupport(LabError):
    pass


class InfeasiblePinning(LabError):
    pass


class InfeasibleFace(InfeasiblePinning):
    pass


class InfeasibleState(LabError):
    pass


class LevelTooHigh(ParameterOutOfRange):
    pass


class TooFewFreeVertices(LabError):
    pass


class NegativeFunctionValue(ValueError, LabError):
    pass


class SupportMismatch(ValueError, LabError):
    pass


class DegenerateEntropy(LabError):
    pass


class DegenerateKL(LabError):
    pass


class DegenerateDenominator(LabError):
    pass


class NotErgodic(LabError):
    pass
