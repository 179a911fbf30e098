"""Exception hierarchy for matchnet.

All domain errors derive from :class:`MatchnetError` so callers can catch a
single base class; the CLI maps subclasses to distinct exit codes.
"""


class MatchnetError(Exception):
    """Base class for all matchnet domain errors."""


class EdgeListParseError(MatchnetError):
    """A row of an edge list or instrument file could not be parsed."""

    def __init__(self, message: str, row: int | None = None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class EmptyNetworkError(MatchnetError):
    """The input contained no usable matches."""


class MissingEdgeError(MatchnetError):
    """A requested worker-firm match is not present in the network."""


class IncompleteAssignmentError(MatchnetError):
    """A productivity assignment does not cover every node it is used on."""


class InstrumentCoverageError(MatchnetError):
    """An instrument file is missing a value for a node that appears in a cycle."""


class NoCyclesError(MatchnetError):
    """The network contains no edge-disjoint four-cycles to estimate from."""


class UninformativeCyclesError(MatchnetError):
    """The cycle statistics are degenerate (denominator indistinguishable from zero)."""


class DegenerateStatisticError(MatchnetError):
    """The test statistic is 0/0 and carries no information."""


class NotIdentifiedError(MatchnetError):
    """The network structure does not support the requested recovery."""


class MonotonicityViolationError(MatchnetError):
    """Pairwise outcome comparisons are inconsistent with a monotone model."""


class DegenerateUpdateError(MatchnetError):
    """An alternating least-squares update has a zero denominator."""


class UndefinedCorrelationError(MatchnetError):
    """A correlation is requested but one side has zero variance."""
