"""Parallel-in-time linear Kalman smoothing with an odd-even block QR factorization."""

from .baselines import GaussianState, dense_oracle, paige_saunders_smooth, rts_smooth
from .covariance import SelInvBlocks, selinv_oddeven, selinv_sequential
from .errors import (
    ContractError,
    FactorizationError,
    KalmanError,
    MissingBlock,
    RankDeficient,
    SingularBlock,
    SingularInnovation,
    UnsupportedProblem,
)
from .factor import FactorBlocks
from .model import SmoothResult, SmootherProblem, StepInput, WhitenedStep, assemble, validate, whiten_step
from .oddeven import OddEvenPermutation, factorize, oddeven_permutation, smooth, solve
from .parallel import ForkJoinPool

__all__ = [
    "ContractError",
    "FactorBlocks",
    "FactorizationError",
    "ForkJoinPool",
    "GaussianState",
    "KalmanError",
    "MissingBlock",
    "OddEvenPermutation",
    "RankDeficient",
    "SelInvBlocks",
    "SingularBlock",
    "SingularInnovation",
    "SmoothResult",
    "SmootherProblem",
    "StepInput",
    "UnsupportedProblem",
    "WhitenedStep",
    "assemble",
    "dense_oracle",
    "factorize",
    "oddeven_permutation",
    "paige_saunders_smooth",
    "rts_smooth",
    "selinv_oddeven",
    "selinv_sequential",
    "smooth",
    "solve",
    "validate",
    "whiten_step",
]
