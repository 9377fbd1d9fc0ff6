"""Exception hierarchy shared by all modules."""


class TdcmmError(Exception):
    """Base class. ``stage`` is filled in by pipelines that re-raise."""

    stage = None

    def __str__(self):
        msg = super().__str__()
        if self.stage:
            return f"[{self.stage}] {msg}"
        return msg


class ParamInvariantViolated(TdcmmError, ValueError):
    pass


class ProbabilityOutOfRange(TdcmmError, ValueError):
    pass


class NotSymmetric(TdcmmError, ValueError):
    pass


class KOutOfRange(TdcmmError, ValueError):
    pass


class DimensionMismatch(TdcmmError, ValueError):
    pass


class WidthTooSmall(TdcmmError, ValueError):
    pass


class RankCollapse(TdcmmError, ArithmeticError):
    pass


class KTooSmall(TdcmmError, ValueError):
    pass


class DegenerateCloud(TdcmmError, ArithmeticError):
    pass


class DegenerateSimplex(TdcmmError, ArithmeticError):
    pass


class NegativeRadicand(TdcmmError, ArithmeticError):
    pass


class DegenerateDenominator(TdcmmError, ArithmeticError):
    pass


class EmptySources(TdcmmError, ValueError):
    pass


class GenerationInfeasible(TdcmmError, RuntimeError):
    pass


class ParseError(TdcmmError, ValueError):
    def __init__(self, msg, path=None, line=None):
        super().__init__(msg)
        self.path = path
        self.line = line


class IndexOutOfRange(TdcmmError, IndexError):
    pass
