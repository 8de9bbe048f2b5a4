"""Exception hierarchy shared by all modules."""


class CuspError(Exception):
    """Base class for every error raised by the package."""


class InvalidSpec(CuspError):
    pass


class NonConvergence(CuspError):
    pass


class BoundViolation(CuspError):
    """Solution of the Dyson equation exceeded the configured bound."""


class SingularEvaluation(CuspError):
    pass


class AmbiguousWindow(CuspError):
    pass


class BracketInvalid(CuspError):
    pass


class BadFit(CuspError):
    pass


class DomainError(CuspError, ValueError):
    pass


class OutOfRange(CuspError):
    pass


class KindMismatch(CuspError):
    pass


class NonInvertible(CuspError):
    pass


class CollisionUnresolved(CuspError):
    pass


class IndexMismatch(CuspError):
    pass


class RangeError(CuspError):
    pass


class StiffnessFailure(CuspError):
    pass


class ZeroVector(CuspError, ValueError):
    pass


class NoConvergence(CuspError):
    """Pearcey quadrature did not settle within the node budget."""


class HullViolation(CuspError):
    pass


class EigenFailure(CuspError):
    pass


class EmptyWindow(CuspError):
    pass


class ConfigError(CuspError):
    pass
