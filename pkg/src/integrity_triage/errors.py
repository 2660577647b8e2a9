"""Exception hierarchy shared by every stage."""

from __future__ import annotations


class TriageError(Exception):
    """Base class for all errors raised by the package."""


class ConfigError(TriageError):
    """Invalid or inconsistent configuration."""


class InputError(TriageError, ValueError):
    """Input data violates a documented precondition."""


class AlignmentError(TriageError):
    """Two series that must share a grid do not."""


class StructuralError(TriageError):
    """Window sets that violate ordering or disjointness."""


class ScoringError(TriageError):
    """Non-finite values reached the score aggregation."""


class FetchError(TriageError):
    """Market-data retrieval failed after retries."""

    def __init__(self, message: str, ticker: str | None = None):
        self.ticker = ticker
        prefix = f"[{ticker}] " if ticker else ""
        super().__init__(prefix + message)


class AuthError(FetchError):
    """The data endpoint rejected the credential."""


class MalformedPayloadError(FetchError):
    """The endpoint answered with something we cannot parse."""


class DataQualityError(FetchError, InputError):
    """Bars failed OHLC consistency checks."""


class StageError(TriageError):
    """Wraps a failure with the pipeline stage (and ticker) it came from."""

    def __init__(self, stage: str, message: str, ticker: str | None = None):
        self.stage = stage
        self.ticker = ticker
        where = f"stage {stage}" + (f", ticker {ticker}" if ticker else "")
        super().__init__(f"{where}: {message}")
