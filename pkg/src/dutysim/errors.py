"""Exception types shared across the package."""


class DutysimError(Exception):
    """Base class for package errors."""


class TraceFormatError(DutysimError):
    """Trace file could not be parsed."""


class TraceValidationError(DutysimError):
    """Trace content violates an invariant (order, bounds, duplicates)."""


class QTableFormatError(DutysimError):
    """Serialized Q-table is corrupt or truncated."""


class ActivityLogError(DutysimError):
    """Activity log has overlaps or coverage gaps."""


class ScheduleError(DutysimError):
    """Schedule definition cannot be simulated."""


class ConfigError(DutysimError):
    """Experiment configuration is invalid; message names the field."""
