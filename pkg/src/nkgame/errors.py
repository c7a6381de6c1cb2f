"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid population or game configuration."""


class PreconditionError(ValueError):
    """An analysis was asked for outside the setting where it applies."""


class DomainError(ValueError):
    """A closed-form expression is undefined for the given arguments."""


class DegenerateVariance(DomainError):
    """Normal approximation requested for a zero-variance agent."""


class StateSpaceTooLarge(RuntimeError):
    """The lumped chain would exceed the configured state cap."""


class UnsupportedMode(ValueError):
    """The requested analysis does not exist for this update mode."""


class SingularChain(RuntimeError):
    """A transient linear system could not be solved."""
