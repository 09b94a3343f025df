"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """A law, spec, or experiment configuration violates a model constraint."""
