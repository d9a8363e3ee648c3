"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of a function or family."""


class MomentError(DomainError):
    """A moment required by a closed form does not exist."""


class DivergenceError(ArithmeticError):
    """A numerical integral or expectation failed to converge."""


class UnsupportedError(ValueError):
    """A model/prior/loss combination has no implementation."""
