"""Exception hierarchy shared by every module of the package."""

from __future__ import annotations


class LtuEvalError(Exception):
    """Base class for all errors raised by ltu_eval."""

    #: module that raised the error, used by the CLI error report
    module = "ltu_eval"


# -- stats_core -------------------------------------------------------------


class StatsError(LtuEvalError, ValueError):
    module = "stats_core"


class RankDeficient(StatsError):
    def __init__(self, dropped):
        self.dropped = tuple(dropped)
        super().__init__(f"collinear design columns: {list(self.dropped)}")


class DimensionMismatch(StatsError):
    pass


class EmptyInput(StatsError):
    pass


class SingletonOnlyGroups(StatsError):
    pass


class TooFewObservations(StatsError):
    pass


class ZeroVariance(StatsError):
    pass


class TooFewPairs(TooFewObservations):
    pass


class ZeroVarianceDifferences(ZeroVariance):
    pass


class ConstantInput(StatsError):
    pass


class EmptyNeighborhood(StatsError):
    def __init__(self, points):
        self.points = tuple(points)
        preview = ", ".join(f"{p:g}" for p in self.points[:5])
        more = "" if len(self.points) <= 5 else f" (+{len(self.points) - 5} more)"
        super().__init__(f"too few points within bandwidth at grid points {preview}{more}")


# -- panel_ingest -----------------------------------------------------------


class IngestError(LtuEvalError, ValueError):
    module = "panel_ingest"


class MissingColumn(IngestError):
    pass


class EmptyFile(IngestError):
    pass


class UnsortedInput(IngestError):
    pass


class InvalidWindow(IngestError):
    pass


class EmptyDay(IngestError):
    pass


# -- bandwidth_select -------------------------------------------------------


class BandwidthError(LtuEvalError, ValueError):
    module = "bandwidth_select"


class NoPairedDays(BandwidthError):
    pass


class EmptySide(BandwidthError):
    pass


class NoBalancedWindow(BandwidthError):
    pass


# -- duration_rdd / time_rdd ------------------------------------------------


class EstimationError(LtuEvalError, ValueError):
    module = "duration_rdd"


class DegenerateDesign(EstimationError):
    pass


class EmptyPanel(EstimationError):
    pass


class ZeroControlMean(EstimationError):
    pass


class InsufficientSpan(EstimationError):
    module = "time_rdd"


class MissingAuxiliarySeries(EstimationError):
    module = "time_rdd"


# -- indirect_fx ------------------------------------------------------------


class EmptyPeriod(LtuEvalError, ValueError):
    module = "indirect_fx"


# -- subsidy_calc -----------------------------------------------------------


class SubsidyError(LtuEvalError, ValueError):
    module = "subsidy_calc"


class NonPositiveWage(SubsidyError):
    pass


class UnknownFirmClass(SubsidyError):
    pass


class EmptyYear(SubsidyError):
    pass


# -- synth_dgp / cli --------------------------------------------------------


class InvalidConfig(LtuEvalError, ValueError):
    module = "synth_dgp"


class ConfigError(LtuEvalError, ValueError):
    module = "cli"


class InputNotFound(LtuEvalError, FileNotFoundError):
    module = "cli"


class ReplicationFailed(LtuEvalError, RuntimeError):
    module = "synth_dgp"

    def __init__(self, replication: int, cause: BaseException):
        self.replication = int(replication)
        self.cause = cause
        self.module = getattr(cause, "module", self.module)
        super().__init__(f"replication {replication}: {type(cause).__name__}: {cause}")
