"""Exception types shared across the package."""


class CurricsimError(Exception):
    """Base class for all library errors."""


class DomainError(CurricsimError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class NoOptimumError(DomainError):
    """The estimator error has no interior minimum (zero curvature)."""


class UnknownTaskError(CurricsimError, LookupError):
    """A task index does not belong to the task set."""


class ContractError(CurricsimError, RuntimeError):
    """An operation was called in a state it does not support."""


class ConfigError(CurricsimError, ValueError):
    """A run configuration failed validation.

    ``field`` names the offending entry (dotted path) when known.
    """

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field

    def __str__(self) -> str:
        msg = super().__str__()
        return f"{self.field}: {msg}" if self.field else msg


class MismatchError(CurricsimError):
    """Runs being compared do not share the same task graph or round axis."""
