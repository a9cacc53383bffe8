"""Exception types raised across the package."""


class SepCertError(Exception):
    """Base class for all package errors."""


class DimensionError(SepCertError, ValueError):
    """Operands live on configuration spaces of different dimension."""


class DomainError(SepCertError, ValueError):
    """A point falls outside the validity domain of a chart or field."""


class NonFiniteError(SepCertError, ArithmeticError):
    """A field evaluated to inf or nan."""


class SingularError(SepCertError, ArithmeticError):
    """A Jacobian, metric or tensor that must be invertible is singular."""


class NotClosedError(SepCertError):
    """A one-form expected to be closed has a nonzero exterior derivative."""


class IllConditionedError(SepCertError, ArithmeticError):
    """A least-squares system is too poorly conditioned to trust."""


class DegenerateEigenvaluesWarning(UserWarning):
    """An L-tensor candidate has (nearly) repeated eigenvalues somewhere."""
