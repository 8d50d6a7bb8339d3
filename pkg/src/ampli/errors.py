"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration: bad JSON fields, malformed strategy tuples,
    impossible sweep grids. Maps to CLI exit code 2."""


class ShapeError(ValueError):
    """Tensor or layer shape mismatch; message names the offending layer."""


class NonFiniteError(FloatingPointError):
    """NaN or Inf encountered where finite values are required."""

    def __init__(self, message: str, *, iteration: int | None = None):
        super().__init__(message)
        self.iteration = iteration
