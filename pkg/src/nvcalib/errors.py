"""Exception types shared across the package."""


class NVCalibError(Exception):
    """Base class for all package errors."""


class ConfigError(NVCalibError, ValueError):
    """Invalid or unknown configuration entry."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


class FitError(NVCalibError, ValueError):
    pass


class FitDegenerate(FitError):
    """The sweep carries no resolvable dip; callers treat this as worst-case loss."""


class NoCrossing(FitError):
    """No sign change of the signal inside the requested window."""


class EmptyBand(NVCalibError, ValueError):
    """No spectral bins fall inside the requested band."""


class ProviderError(NVCalibError):
    """Acquisition failure.

    ``kind`` is one of ``"timeout"`` (transport), ``"protocol"`` (malformed
    response) or ``"range"`` (field or request outside instrument limits).
    """

    KINDS = ("timeout", "protocol", "range")

    def __init__(self, kind: str, message: str = ""):
        if kind not in self.KINDS:
            raise ValueError(f"unknown provider error kind {kind!r}")
        super().__init__(f"{kind}: {message}" if message else kind)
        self.kind = kind
        self.message = message
