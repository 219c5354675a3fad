"""Exception types shared across the package."""


class SkelconError(Exception):
    """Base class for all package-specific errors."""


class ParseError(SkelconError):
    """A file could not be parsed (malformed line, bad header, ...)."""


class SchemaError(SkelconError):
    """A parsed record contradicts the dataset header or its own metadata."""


class ValidationError(SkelconError):
    """A skeleton sequence violates a structural invariant."""


class ContractError(SkelconError):
    """An operation was called with inputs that break its contract."""


class DegenerateEmbeddingError(SkelconError):
    """A projected feature vector had (near-)zero norm and cannot be normalized."""


class DegenerateTaskError(SkelconError):
    """A supervised task is unlearnable as posed (e.g. single-class training set)."""


class ConfigError(SkelconError):
    """An experiment config is malformed; the message names the key path."""
