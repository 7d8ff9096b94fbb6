"""Exception types raised across the package."""

from .linalg import NumericInputError

__all__ = [
    "NumericInputError",
    "ShapeError",
    "DomainError",
    "ContractError",
    "GenerationError",
    "ConfigError",
    "InsufficientDataError",
    "UnsupportedError",
]


class ShapeError(ValueError):
    """Array dimensions disagree with the fitted policy or environment."""


class DomainError(ValueError):
    """A value lies outside its admissible range (payoffs, probabilities)."""


class ContractError(RuntimeError):
    """Methods were called out of order, e.g. observe without a matching select."""


class GenerationError(RuntimeError):
    """The synthetic environment could not satisfy its constraints."""


class ConfigError(ValueError):
    """Invalid experiment or estimator configuration."""


class InsufficientDataError(ValueError):
    """A solver was called without any observations."""


class UnsupportedError(RuntimeError):
    """Operation is not available in the current mode (e.g. regret in replay)."""
