"""Exception types shared across the library."""


class ContractViolation(ValueError):
    """An operation was called with arguments that break its contract
    (shape mismatch, invalid label id, stale cache, ...)."""


class ConfigurationError(ValueError):
    """A configuration value is structurally invalid (bad divisibility,
    non-integral output size, unknown config key, ...)."""
