"""Exception types shared across the package; the CLI maps them onto exit codes."""


class TraceGanError(Exception):
    """Base class for all library errors."""


class DataError(TraceGanError):
    """Bad or missing input data: unreadable directories, invalid counts, empty classes."""


class ShapeError(TraceGanError):
    """Tensor shape disagreement between a layer and its input or cache."""


class CheckpointError(TraceGanError):
    """Malformed, truncated, or architecturally incompatible checkpoint file."""


class NumericalError(TraceGanError):
    """Non-finite value in a place where training cannot continue."""


class MetricsError(TraceGanError):
    """Evaluation inputs that make a metric undefined."""
