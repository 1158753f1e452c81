"""Exceptions shared by the solvers and both kernel backends."""


class DivergenceError(FloatingPointError):
    """Non-finite values appeared during time stepping; ``time`` marks where."""

    def __init__(self, msg: str, time: float | None = None):
        super().__init__(msg if time is None else f"{msg} (t={time:.9g})")
        self.time = time


class PositivityError(ValueError):
    """Density fell below the admissible negative roundoff threshold."""


class StepSizeError(ValueError):
    """Requested time step exceeds the stability bound."""
