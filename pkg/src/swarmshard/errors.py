"""Exception types shared across the package."""


class SwarmShardError(Exception):
    """Base class for all package errors."""


class ValidationError(SwarmShardError, ValueError):
    pass


class CycleDetected(ValidationError):
    def __init__(self, cycle):
        self.cycle = list(cycle)
        super().__init__(f"cycle detected: {' -> '.join(map(str, self.cycle))}")


class DanglingEdge(ValidationError):
    def __init__(self, edge):
        self.edge = tuple(edge)
        super().__init__(f"edge {self.edge} references a missing node")


class ParseError(SwarmShardError, ValueError):
    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)


class InvalidBudget(SwarmShardError, ValueError):
    pass


class TooLarge(SwarmShardError, ValueError):
    pass


class LengthMismatch(SwarmShardError, ValueError):
    pass


class DisconnectedNetwork(SwarmShardError, ValueError):
    def __init__(self, components):
        self.components = [sorted(c) for c in components]
        super().__init__(f"network is disconnected; components: {self.components}")


class InvalidFiltration(SwarmShardError, ValueError):
    pass


class TooManyPoints(SwarmShardError, ValueError):
    pass


class InfiniteBarMismatch(SwarmShardError, ValueError):
    pass


class EmptyLibrary(SwarmShardError, ValueError):
    pass


class ZeroDimensional(SwarmShardError, ValueError):
    pass


class OutOfRange(SwarmShardError, ValueError):
    pass


class NoCandidates(SwarmShardError):
    pass


class InsufficientNodes(SwarmShardError):
    """Not enough eligible nodes to fill every swarm position.

    When raised from a simulation, ``partial_trace`` holds the events recorded
    before the session was aborted.
    """

    def __init__(self, message, partial_trace=None):
        super().__init__(message)
        self.partial_trace = partial_trace


class AllZeroFitness(SwarmShardError, ValueError):
    pass


class MismatchedCounts(SwarmShardError, ValueError):
    pass
