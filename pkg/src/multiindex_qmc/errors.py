"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid problem, lattice or run configuration."""


class DomainError(ValueError):
    """An argument lies outside the domain of an operation."""


class SolverError(RuntimeError):
    """Iterative linear solver failed to reach its tolerance.

    The residual history (one entry per cycle) is kept on ``history``.
    """

    def __init__(self, message, history=()):
        super().__init__(message)
        self.history = list(history)


class EstimatorFailure(RuntimeError):
    """An estimator driver could not meet its accuracy target.

    ``diagnostics`` holds whatever partial information the driver had
    (fitted rates, screened levels, requested level).
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
