"""Exception hierarchy shared across the toolkit."""


class PidalignError(Exception):
    """Base class for all toolkit errors."""


class InvalidGraphError(PidalignError):
    """Graph structure violates a representation invariant."""


class GraphEditError(PidalignError):
    """An edit batch could not be applied; the graph is unchanged."""


class UnknownNodeError(GraphEditError):
    pass


class DuplicateNodeError(GraphEditError):
    pass


class DuplicateEdgeError(GraphEditError):
    pass


class UnknownEdgeError(GraphEditError):
    pass


class DuplicateIdError(PidalignError):
    """Two input primitives share an id."""


class KindMismatchError(PidalignError):
    """An operation was pointed at a node of the wrong kind."""


class DegreeTooHighError(PidalignError):
    """Equipment removal is ambiguous for nodes of degree three or more."""


class EmptyGraphError(PidalignError):
    """Matching requires both graphs to be non-empty."""


class NonFiniteError(PidalignError):
    """A NaN or Inf appeared during solver iterations."""


class NeighborsUnmatchedError(PidalignError):
    """Hidden-object localization needs every neighbor to have a preimage."""


class MaxRoundsExceededError(PidalignError):
    """The resolution loop hit its round cap without converging."""
