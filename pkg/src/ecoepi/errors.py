"""Exception types shared across the package."""


class EcoEpiError(Exception):
    pass


class GridError(EcoEpiError, ValueError):
    """Field/grid mismatch or an ill-posed discrete operator."""


class ParameterError(EcoEpiError, ValueError):
    pass


class SolverError(EcoEpiError, RuntimeError):
    """An iterative solver failed to converge."""


class EigenConvergenceError(SolverError):
    pass


class NewtonDivergence(SolverError):
    pass


class InconsistencyError(SolverError):
    """A computed solution contradicts what the theory guarantees
    (e.g. a negative component of a decomposition that must be positive)."""


class PositivityError(EcoEpiError, RuntimeError):
    """A simulated field went negative; almost always ``dt`` is too large."""

    def __init__(self, message, t=None, field=None, value=None, trajectory=None):
        super().__init__(message)
        self.t = t
        self.field = field
        self.value = value
        self.trajectory = trajectory


class InitialDataError(EcoEpiError, ValueError):
    """Initial or evaluated fields outside the admissible (positive) set."""
