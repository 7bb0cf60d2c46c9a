"""Exception types shared across the package."""


class AuthchainError(Exception):
    """Base class for all package errors."""


class ConfigError(AuthchainError):
    """Invalid configuration value (named in the message)."""


class ScheduleError(AuthchainError):
    """A block was proposed by a validator that is not scheduled."""


class FormatError(AuthchainError):
    """A persisted artifact (weight file, chain file, log export) is malformed."""


class DecryptError(AuthchainError):
    """Ciphertext failed authentication or was produced for a different key."""
