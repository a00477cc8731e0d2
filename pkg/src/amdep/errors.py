"""Exception taxonomy shared across the package."""

from __future__ import annotations


class AmdepError(Exception):
    """Base class for all errors raised by this package."""


class CorpusError(AmdepError):
    """A graph in a corpus file failed validation.

    Carries the offending graph id (or None when the file itself is bad).
    """

    def __init__(self, message, graph_id=None):
        super().__init__(message if graph_id is None else f"graph {graph_id!r}: {message}")
        self.graph_id = graph_id


class TypeDepthExceeded(AmdepError):
    pass


class RequestClash(AmdepError):
    def __init__(self, name, a=None, b=None):
        detail = f"source {name!r} carries conflicting requests"
        if a is not None:
            detail += f": {a} vs {b}"
        super().__init__(detail)
        self.name = name


class MissingSource(AmdepError):
    def __init__(self, name):
        super().__init__(f"no source named {name!r} at top level")
        self.name = name


class RequestMismatch(AmdepError):
    def __init__(self, name, expected, actual):
        super().__init__(f"request at {name!r} expects {expected}, argument has type {actual}")
        self.name = name
        self.expected = expected
        self.actual = actual


class NonEmptyModRequest(AmdepError):
    def __init__(self, name):
        super().__init__(f"modifier slot {name!r} must carry the empty request")
        self.name = name


class ModAddsSources(AmdepError):
    def __init__(self, names):
        super().__init__(f"modifier would add sources {sorted(names)} to the head type")
        self.names = frozenset(names)


class LabelClash(AmdepError):
    def __init__(self, a, b):
        super().__init__(f"cannot merge nodes labeled {a!r} and {b!r}")


class NotWellTyped(AmdepError):
    def __init__(self, node, cause):
        super().__init__(f"at node {node!r}: {cause}")
        self.node = node
        self.cause = cause


class NonEmptyRootType(NotWellTyped):
    def __init__(self, typ):
        AmdepError.__init__(self, f"evaluation leaves open sources {typ}")
        self.node = None
        self.cause = f"root type {typ} is not empty"
        self.typ = typ


class GenerationExhausted(AmdepError):
    pass


class ResolutionFailed(AmdepError):
    def __init__(self, node, cause):
        super().__init__(f"resolving {node!r}: {cause}")
        self.node = node
        self.cause = cause


class InvalidSwapPair(AmdepError):
    pass


class EmptyAutomaton(AmdepError):
    """Raised by queries that need at least one accepted tree."""


class NonFiniteGradient(AmdepError):
    pass
