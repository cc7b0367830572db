"""Exception hierarchy shared across the package."""


class ChainSentryError(Exception):
    """Base class for all package errors."""


class DataError(ChainSentryError):
    """Malformed or inconsistent input data or stage artifacts."""


class NotFoundError(ChainSentryError):
    """A requested address, transaction, or artifact does not exist."""


class ConfigError(ChainSentryError):
    """Invalid configuration (unknown keys, out-of-range values)."""


class NotFittedError(ChainSentryError):
    """Estimator used before fit()."""
