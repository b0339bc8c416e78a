"""Exception hierarchy shared by all smoothers."""


class KalmanError(Exception):
    """Base class. ``phase`` is filled in by the smoother driver when known."""

    phase: str | None = None


class ContractError(KalmanError, ValueError):
    """Shapes or arguments do not conform to a kernel or solver contract."""


class FactorizationError(KalmanError):
    """A noise covariance could not be factored (not SPD to working precision)."""

    def __init__(self, step: int, which: str):
        self.step = step
        self.which = which
        super().__init__(f"covariance {which} of step {step} is not symmetric positive definite")


class SingularBlock(KalmanError):
    """A triangular diagonal block is singular to tolerance."""

    def __init__(self, position, detail: str = ""):
        self.position = position
        msg = f"singular triangular block at {position}"
        super().__init__(msg + (f" ({detail})" if detail else ""))


class RankDeficient(KalmanError):
    """The whitened system matrix does not have full column rank."""

    def __init__(self, column: int, detail: str = ""):
        self.column = column
        msg = f"rank deficiency detected at block column {column}"
        super().__init__(msg + (f" ({detail})" if detail else ""))


class MissingBlock(KalmanError):
    """Selected inversion needed an inverse block that was never stored."""

    def __init__(self, row: int, col: int):
        self.row = row
        self.col = col
        super().__init__(f"inverse block S[{row},{col}] was not computed")


class SingularInnovation(KalmanError):
    """An innovation covariance in the Kalman filter is numerically singular."""

    def __init__(self, step: int):
        self.step = step
        super().__init__(f"innovation covariance at step {step} is singular")


class UnsupportedProblem(KalmanError, ValueError):
    """The problem is valid but outside what a particular smoother handles."""
