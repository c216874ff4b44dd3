"""Exception types shared across the package."""


class DegenerateGeometryError(ValueError):
    """Two agents are (numerically) coincident where a pairwise quantity is singular."""


class AttitudeSingularityError(RuntimeError):
    """Pitch angle reached the Euler-rate singularity |theta| >= pi/2."""


class SolverNumericalError(RuntimeError):
    """Solver produced non-finite iterates; carries the last finite iterate."""

    def __init__(self, message, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate
