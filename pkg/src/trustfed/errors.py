"""Exception types shared across the package."""


class TrustFedError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(TrustFedError, ValueError):
    """Array dimensions do not match the declared architecture."""


class DomainError(TrustFedError, ValueError):
    """An argument is outside the operation's domain."""


class NumericalError(TrustFedError, ArithmeticError):
    """A computation produced non-finite values."""


class IntegrityError(TrustFedError):
    """Stored bytes do not hash to the digest they were filed under."""


class RegistryError(TrustFedError, KeyError):
    """A client id is not registered in the trust ledger."""


class DegenerateAggregationError(TrustFedError):
    """Every queued submission carries zero aggregation weight."""


class ConfigError(TrustFedError, ValueError):
    """A simulation configuration fails validation."""
