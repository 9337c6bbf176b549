"""Exception types shared across the package."""


class AonError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(AonError):
    """Operand shapes or dimensions violate an operation contract."""


class ConfigError(AonError):
    """A configuration is inconsistent or impossible to construct."""


class ContractError(AonError):
    """A caller violated an API precondition."""


class NumericsError(AonError):
    """A NaN or Inf appeared where only finite values are allowed."""


class CheckpointError(AonError):
    """A checkpoint file is malformed or incompatible."""


class GenerationError(AonError):
    """A synthetic sample could not be rendered under its constraints."""


class DataError(AonError):
    """A dataset record is unreadable or inconsistent with the vocabulary."""
