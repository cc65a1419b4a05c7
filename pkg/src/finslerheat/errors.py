"""Exception types shared across the package."""


class SpecValidationError(ValueError):
    """A spec object (norm, grid, config, ...) violates its invariants."""


class DomainError(ValueError):
    """An argument is outside the mathematical domain of an operation."""


class OutOfRangeError(DomainError):
    """A requested evaluation point lies outside a profile/grid range."""


class StabilityError(SpecValidationError):
    """An explicit time step violates its stability bound."""


class ConvergenceError(RuntimeError):
    """An iterative procedure did not reach its tolerance.

    Carries the best value found and an estimate of the remaining gap so
    callers can decide whether the partial answer is usable.
    """

    def __init__(self, message, best=None, gap=None):
        super().__init__(message)
        self.best = best
        self.gap = gap
