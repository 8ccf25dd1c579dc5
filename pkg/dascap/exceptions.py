# dascap/exceptions.py


class DasError(Exception):
    """Base class for every error raised by dascap."""


class GeometryError(DasError, ValueError):
    pass


class ChannelError(DasError, ValueError):
    pass


class CovarianceError(DasError, ValueError):
    """A transmit covariance failed Hermitian, PSD or per-port trace checks."""


class BracketError(DasError):
    """Bisection could not bracket the target rate inside the configured power bounds."""

    def __init__(self, message: str, lower: float, upper: float):
        super().__init__(message)
        self.lower = lower
        self.upper = upper


class ConfigError(DasError):
    pass
