"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid loss, noise, training, or experiment configuration."""


class DataError(ValueError):
    """Malformed or out-of-range data (labels, features, CSV rows)."""


class SizeError(ValueError):
    """Problem instance too large for an exhaustive procedure."""
