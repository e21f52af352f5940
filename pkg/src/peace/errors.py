"""Exception types shared across the package."""


class PeaceError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(PeaceError):
    """Bad user-provided input: files, schemas, arguments."""


class ConfigError(ValidationError):
    """Malformed or inconsistent run configuration."""


class BackendError(PeaceError):
    """Model backend failed to construct or to run inference."""


class ComputationError(PeaceError):
    """Numeric contract violated (zero vectors, NaN logits, dim mismatch)."""


class ContractError(PeaceError):
    """Internal invariant breached; indicates a bug, not bad input."""
