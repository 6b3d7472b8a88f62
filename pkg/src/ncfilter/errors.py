"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Raised when a scenario configuration is malformed.

    Carries the offending field path in the message so the user can fix
    the config without reading source code.
    """


class IntegrationError(RuntimeError):
    """Raised when an integrator produces non-finite values."""


class VanishingIntensityError(RuntimeError):
    """Raised when a counting jump is requested at (numerically) zero intensity."""
