"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """A parameter, plan or file is inconsistent with what an operation needs."""


class InvalidSampleError(ValueError):
    """A sample value cannot be represented (NaN or infinite)."""
