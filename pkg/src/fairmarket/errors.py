"""Exception hierarchy shared by every module of the package."""


class MarketError(Exception):
    """Base class for all domain errors raised by fairmarket."""


# metrics
class MetricError(MarketError, ValueError):
    pass


class EmptyProfile(MetricError):
    pass


class NonPositiveRate(MetricError):
    pass


class DegenerateMean(MetricError):
    pass


class NonPositiveGroupMean(MetricError):
    pass


class UnknownSubgroup(MetricError):
    pass


class AllWorkersExcluded(MetricError):
    pass


# market
class ShapeMismatch(MarketError, ValueError):
    pass


class InfeasibleAssignment(MarketError):
    pass


# objective
class NonDifferentiablePoint(MarketError, ArithmeticError):
    pass


# solvers
class InstanceTooLarge(MarketError):
    pass


class NoFeasibleAssignment(MarketError):
    pass


class NoFeasibleRounding(MarketError):
    pass


class DivergedObjective(MarketError, ArithmeticError):
    pass


class NonQuadraticObjective(MarketError):
    pass


# experiments / statistics
class DegenerateVariance(MarketError, ArithmeticError):
    pass


# io
class MissingColumn(MarketError, KeyError):
    def __str__(self):
        # KeyError quotes its message; keep it readable
        return str(self.args[0]) if self.args else ""


class EmptyDataset(MarketError):
    pass


class DatasetTooSmall(MarketError):
    pass


class InvalidRange(MarketError, ValueError):
    pass


class ConfigError(MarketError, ValueError):
    pass


class RunFailed(MarketError):
    """A solver error inside an experiment, tagged with the run that raised it."""

    def __init__(self, context: str, cause: Exception):
        super().__init__(f"{context}: {type(cause).__name__}: {cause}")
        self.context = context
        self.cause = cause
