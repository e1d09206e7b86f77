"""Exception types shared across the package."""


class CropRLError(Exception):
    """Base class for all package errors."""


class ConfigurationError(CropRLError):
    """Invalid configuration value or missing configuration entry."""


class InputError(CropRLError):
    """Invalid runtime input (out-of-range argument, malformed file row)."""


class SimulationError(CropRLError):
    """The simulator was driven into an invalid regime (non-finite forcing)."""


class ProtocolError(CropRLError):
    """Environment or trainer API used out of order (e.g. step after done)."""


class ShapeError(CropRLError):
    """Tensor operands have incompatible shapes."""


class NumericsError(CropRLError):
    """A tensor operation produced NaN or Inf."""


class UsageError(CropRLError):
    """A library call violated its documented contract."""


class DivergenceError(CropRLError):
    """An iterative solver failed to converge."""
