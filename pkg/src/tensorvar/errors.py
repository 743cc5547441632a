"""Exception types raised across the package."""


class TensorVarError(Exception):
    """Base class for package errors."""


class InsufficientDataError(TensorVarError, ValueError):
    pass


class ModelStateError(TensorVarError):
    """A latent state or parameter is outside its support (e.g. non-PD covariance)."""


class SamplerError(TensorVarError):
    """A Gibbs block failed (non-PD precision, mode search did not converge, ...)."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class DataError(TensorVarError, ValueError):
    """Malformed input file or series."""


class MissingColumnError(DataError):
    def __init__(self, column, path=None):
        where = f" in {path}" if path else ""
        super().__init__(f"column {column!r} not found{where}")
        self.column = column


class ConfigError(TensorVarError, ValueError):
    pass


class ConstantSeriesError(DataError):
    """A series has zero standard deviation on the standardization window."""
