"""Exception classes shared across the package."""


class CtriskError(Exception):
    """Base class for all package errors."""


class ValidationError(CtriskError):
    """A model, certificate, or configuration failed structural validation."""


class ModelDocumentError(ValidationError):
    """A model document could not be parsed; the message names the offending entry."""


class CertificateError(CtriskError):
    """A certificate-dependent quantity was requested without a passing certificate."""


class NumericalError(CtriskError):
    """Overflow, non-finite values, or an exceeded explosion guard."""
