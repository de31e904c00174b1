"""Exception types shared across the pipeline."""


class StreetgazeError(Exception):
    """Base class for all pipeline errors."""


class ValidationError(StreetgazeError, ValueError):
    """Bad arguments, malformed configuration, or contract violations."""


class GazeParseError(ValidationError):
    """Raised in strict mode when a gaze log contains malformed lines.

    Carries the first offending diagnostics so callers can report line
    numbers without re-parsing.
    """

    def __init__(self, message, diagnostics=()):
        super().__init__(message)
        self.diagnostics = list(diagnostics)


class FormatError(ValidationError):
    """An exchange file (PNG, JSONL, CSV) does not conform to its format."""


class EmptyHighlightRegionError(StreetgazeError):
    """No pixel falls below the hue threshold, so the region ratio is undefined."""


class StratumUnderflowError(StreetgazeError):
    """A stratification pool is smaller than the requested sample size."""

    def __init__(self, stratum, available, requested):
        super().__init__(
            f"stratum {stratum!r} has {available} images, need {requested}"
        )
        self.stratum = stratum
        self.available = available
        self.requested = requested


class InsufficientDataError(StreetgazeError):
    """Not enough scored data to assemble a ranking report."""
