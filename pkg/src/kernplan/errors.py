"""Exception types shared across the package."""


class KernplanError(Exception):
    """Base class for all package errors."""


class ParameterError(KernplanError, ValueError):
    """A function argument violates its documented precondition."""


class DegenerateWeightsError(KernplanError, ValueError):
    """All log-weights are -inf: the weight vector has empty support."""


class NumericError(KernplanError, ValueError):
    """NaN or Inf encountered where finite values are required."""


class DimensionError(KernplanError, ValueError):
    """Array shapes are inconsistent with the declared system dimensions."""


class ConfigError(KernplanError, ValueError):
    """Invalid run configuration (unknown keys, inconsistent values, ...)."""


class UnsafeStateError(KernplanError, ValueError):
    """The initial state handed to a shielded operation is not in the safe set."""


class LibraryFormatError(KernplanError, ValueError):
    """A trajectory-library file is malformed, corrupted, or mismatched."""
