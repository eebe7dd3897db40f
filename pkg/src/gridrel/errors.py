"""Exception types shared across the package."""


class GridRelError(Exception):
    """Base class for all gridrel errors."""


class SystemModelError(GridRelError):
    """Invalid system description (schema, references, parameter ranges)."""


class OpfSolveError(GridRelError):
    """The load-shedding LP could not be solved for a state.

    The LP is feasible by construction (shedding every load is always a
    solution), so this signals a solver failure rather than a bad state.
    """

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class MonotonicityError(GridRelError):
    """The shedding oracle returned a non order-preserving classification.

    Interval classification from endpoint statuses is only sound for
    monotone systems; a violation must abort the run, not be papered over.
    """


class AssessmentError(GridRelError):
    """An index computation was asked to run on unusable inputs."""
