"""Exception types shared across the package."""


class DivergenceError(RuntimeError):
    """A solver produced a non-finite state.

    Carries the first offending step index so batch drivers can report
    where a run blew up instead of silently clipping.
    """

    def __init__(self, step: int, message: str | None = None):
        self.step = step
        super().__init__(message or f"non-finite state at step {step}")


class SingularOperatorError(RuntimeError):
    """A discrete kernel operator cannot be inverted (tiny diagonal)."""


class UnsupportedModelError(ValueError):
    """The requested computation needs model structure that is absent."""


class NumericalError(RuntimeError):
    """A numerical routine failed beyond the documented retries."""
