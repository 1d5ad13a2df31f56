from __future__ import annotations


class SpheregateError(Exception):
    """Root of every error raised by the library."""


class ConfigError(SpheregateError, ValueError):
    pass


class GeometryError(SpheregateError, ValueError):
    pass


class ModelError(SpheregateError, ValueError):
    pass


class SamplingError(SpheregateError, RuntimeError):
    """Rejection sampling ran out of attempts."""


class SolverError(SpheregateError, RuntimeError):
    pass
