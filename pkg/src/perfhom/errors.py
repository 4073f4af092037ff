"""Exception hierarchy shared by all modules."""


class PerfhomError(Exception):
    pass


class GeometryError(PerfhomError, ValueError):
    pass


class HoleTouchesCellBoundary(GeometryError):
    pass


class EmptyRobinPart(GeometryError):
    pass


class EmptyNeumannPart(GeometryError):
    pass


class HoleNotGridAligned(GeometryError):
    pass


class EpsilonNotUnitFraction(GeometryError):
    pass


class UnknownLabel(PerfhomError, KeyError):
    pass


class NotACellMesh(PerfhomError, ValueError):
    pass


class NodeOutsideSource(PerfhomError, ValueError):
    pass


class PointInsideHole(PerfhomError, ValueError):
    pass


class MeshMismatch(PerfhomError, ValueError):
    pass


class NonFiniteCoefficient(PerfhomError, ValueError):
    pass


class NonElliptic(PerfhomError, ValueError):
    pass


class IncompatibleRHS(PerfhomError, ValueError):
    pass


class KernelUnresolved(PerfhomError, ValueError):
    pass


class NegativeInitialData(PerfhomError, ValueError):
    pass


class TooFewPoints(PerfhomError, ValueError):
    pass


class NonPositiveValue(PerfhomError, ValueError):
    pass


class NumericalFailure(PerfhomError, RuntimeError):
    """Base for failures that map to CLI exit code 2."""


class NotConverged(NumericalFailure):
    """CG hit max_iter; ``x`` holds the best iterate found."""

    def __init__(self, message, x=None, residual=float("nan"), iterations=0):
        super().__init__(message)
        self.x = x
        self.residual = residual
        self.iterations = iterations


class BlowUp(NumericalFailure):
    pass


class ParseError(PerfhomError, ValueError):
    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class ValidationError(PerfhomError, ValueError):
    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
