"""Exception hierarchy shared by every loadcast module."""


class LoadcastError(Exception):
    """Base class for all loadcast errors."""


class UngriddedData(LoadcastError, ValueError):
    """Observation timestamps are not uniformly spaced."""


class OutOfRange(LoadcastError, ValueError):
    """A CPU-usage value lies outside [0, 100]."""


class EmptyTrace(LoadcastError, ValueError):
    pass


class InvalidSplit(LoadcastError, ValueError):
    pass


class InsufficientData(LoadcastError, ValueError):
    """The series is too short for the requested operation."""


class InvalidKind(LoadcastError, ValueError):
    pass


class EmptyCollection(LoadcastError, ValueError):
    pass


class DegenerateSeries(LoadcastError, ValueError):
    """Zero variance makes the statistic undefined."""


class InvalidSpacing(LoadcastError, ValueError):
    pass


class InvalidOrder(LoadcastError, ValueError):
    pass


class FitDiverged(LoadcastError, RuntimeError):
    """No restart of the simplex search reached a feasible point."""


class NoFeasibleModel(LoadcastError, RuntimeError):
    pass


class ShapeError(LoadcastError, ValueError):
    pass


class TrainingDiverged(LoadcastError, RuntimeError):
    pass


class ChannelMismatch(LoadcastError, ValueError):
    pass


class UndefinedMetric(LoadcastError, ValueError):
    """Every actual value is zero, so MAPE has no defined terms."""


class ZeroActual(LoadcastError, ValueError):
    pass


class ConfigError(LoadcastError, ValueError):
    pass
