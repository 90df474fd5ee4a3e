"""Exception types shared across the package.

The CLI maps these onto exit codes: ValidationError -> 1,
ProtocolError / BackendError -> 2, OSError -> 3.
"""


class NerAuditError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(NerAuditError):
    """Malformed or contradictory input data (registries, templates, corpora)."""


class ProtocolError(NerAuditError):
    """A backend sent a response that violates the wire protocol."""


class BackendError(NerAuditError):
    """A backend is unreachable, dead, or timed out."""
