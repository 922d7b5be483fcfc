EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DOMAIN = 2
EXIT_ASSERTION = 3
EXIT_INTERNAL = 4


class NonsqueezeError(Exception):
    """Base class for errors raised by the engines."""
    exit_code = EXIT_INTERNAL


class DomainError(NonsqueezeError, ValueError):
    """An input violates an operation's precondition."""
    exit_code = EXIT_DOMAIN


class NumericError(NonsqueezeError, ArithmeticError):
    """A numerical routine failed to converge."""
    exit_code = EXIT_INTERNAL


class InternalError(NonsqueezeError, RuntimeError):
    """A state that exact arithmetic says cannot occur."""
    exit_code = EXIT_INTERNAL


class AcceptanceError(NonsqueezeError, AssertionError):
    """A measured quantity missed its acceptance gate."""
    exit_code = EXIT_ASSERTION

    def __init__(self, message, failures=None):
        super().__init__(message)
        self.failures = list(failures or [])
