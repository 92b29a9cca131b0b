"""Exception hierarchy. The CLI maps each class onto an exit code."""


class HTypeError(Exception):
    exit_code = 1


class DomainError(HTypeError, ValueError):
    """Precondition violated by the caller (bad spec, |y| >= pi, lambda <= 0 ...)."""
    exit_code = 2


class QuadratureError(HTypeError, RuntimeError):
    """Adaptive quadrature did not reach tolerance; keeps what it achieved."""
    exit_code = 3

    def __init__(self, message, value=None, abs_error=None):
        super().__init__(message)
        self.value = value
        self.abs_error = abs_error


class CertificationError(HTypeError):
    exit_code = 3


class VerificationError(HTypeError):
    exit_code = 4
