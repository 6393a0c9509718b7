"""Exception hierarchy. Each class maps to a distinct CLI exit code."""


class StableTwinError(Exception):
    exit_code = 1


class DataError(StableTwinError, ValueError):
    """Malformed or inconsistent trajectory data."""
    exit_code = 3


class FitError(StableTwinError, ValueError):
    """A regression could not be computed."""
    exit_code = 4


class StabilizationError(StableTwinError, RuntimeError):
    """The penalty search failed to reach the target spectral radius."""
    exit_code = 5


class AlignmentError(StableTwinError, ValueError):
    """Two datasets that must share flights and timestamps do not."""
    exit_code = 6


class DivergenceError(StableTwinError, ArithmeticError):
    """A rollout left the finite range.

    Attributes
    ----------
    step : int
        Index of the first offending predicted state.
    trajectory : np.ndarray
        States computed up to (excluding) ``step``.
    """
    exit_code = 7

    def __init__(self, step, trajectory=None):
        super().__init__(f"rollout diverged at step {step}")
        self.step = step
        self.trajectory = trajectory
