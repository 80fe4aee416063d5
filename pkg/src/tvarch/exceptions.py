"""Exception types raised across the package."""


class TvArchError(Exception):
    """Base class for domain errors."""


class AssumptionViolation(TvArchError):
    """A regularity inequality fails somewhere on the check grid."""

    def __init__(self, inequality: str, u: float | None = None, lhs=None, rhs=None):
        self.inequality = inequality
        self.u = u
        self.lhs = lhs
        self.rhs = rhs
        where = "" if u is None else f" at u={u:.6g}"
        detail = "" if lhs is None else f" ({lhs!r} vs {rhs!r})"
        super().__init__(f"{inequality} violated{where}{detail}")


class UnsupportedLaw(TvArchError):
    pass


class NotDifferentiable(TvArchError):
    pass


class InfeasibleOmega(TvArchError):
    pass


class BoundaryViolation(TvArchError):
    """Kernel support is clipped by the sample edges under the strict policy."""


class NotConverged(TvArchError):
    def __init__(self, message: str, result=None):
        super().__init__(message)
        self.result = result


class SingularSigma(TvArchError):
    pass


class StencilOutOfRange(TvArchError):
    pass


class ConfigError(TvArchError):
    """Malformed or inconsistent configuration."""


class ExperimentFailed(TvArchError):
    pass
