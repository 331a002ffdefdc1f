"""Exception types raised by the solvers and the harness."""


class PassError(Exception):
    """Base class for all package errors."""


class LayoutInvalid(PassError):
    pass


class RegionTooSmall(PassError):
    pass


class KCapExceeded(PassError):
    pass


class BracketFailure(PassError):
    pass


class RankDeficient(PassError):
    pass


class Infeasible(PassError):
    pass


class NumericalStall(PassError):
    pass


class EmptyFeasibleRange(PassError):
    pass


class NoZeroInRange(PassError):
    pass


class ConfigInvalid(PassError):
    pass
