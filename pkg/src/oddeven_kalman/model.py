"""Linear dynamic-system problems and their whitened block rows.

Step ``i`` carries an evolution equation ``H_i u_i = F_i u_{i-1} + c_i + eps_i``
(absent for ``i = 0``) and an optional observation ``o_i = G_i u_i + delta_i``.
Noise covariances ``K_i`` (evolution) and ``L_i`` (observation) may be given
as full SPD matrices or as 1-D arrays holding a diagonal.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .errors import ContractError, FactorizationError

Array = np.ndarray


def _opt(a) -> Array | None:
    return None if a is None else np.asarray(a, dtype=np.float64)


@dataclass
class StepInput:
    """Model blocks of one time step.

    ``F``, ``H``, ``c`` and ``K`` describe the evolution equation and are left
    as ``None`` for the first step. ``G``, ``o`` and ``L`` describe the
    observation; leave ``G`` as ``None`` (or give it zero rows) for an
    unobserved step, in which case ``n`` must be given explicitly.
    """

    F: Array | None = None
    H: Array | None = None
    c: Array | None = None
    G: Array | None = None
    o: Array | None = None
    K: Array | None = None
    L: Array | None = None
    n: int | None = None

    def __post_init__(self):
        for name in ("F", "H", "c", "G", "o", "K", "L"):
            setattr(self, name, _opt(getattr(self, name)))
        if self.n is None:
            if self.H is not None and self.H.ndim == 2:
                self.n = self.H.shape[1]
            elif self.G is not None and self.G.ndim == 2:
                self.n = self.G.shape[1]
            else:
                raise ContractError("state dimension n cannot be inferred; pass n explicitly")

    @property
    def has_evolution(self) -> bool:
        return self.F is not None or self.H is not None

    @property
    def ell(self) -> int:
        if self.H is not None and self.H.ndim == 2:
            return self.H.shape[0]
        return 0

    @property
    def m(self) -> int:
        if self.G is not None and self.G.ndim == 2:
            return self.G.shape[0]
        return 0


@dataclass
class WhitenedStep:
    """Whitened blocks ``C = W G``, ``B = V F``, ``D = V H`` and right-hand sides.

    ``C`` always exists (possibly with zero rows). ``B``, ``D`` and ``rhs_evo``
    are ``None`` for the first step.
    """

    C: Array
    rhs_obs: Array
    B: Array | None = None
    D: Array | None = None
    rhs_evo: Array | None = None

    @property
    def n(self) -> int:
        return self.C.shape[1]


@dataclass
class SmootherProblem:
    steps: list[StepInput]

    def __post_init__(self):
        self.steps = list(self.steps)
        if not self.steps:
            raise ContractError("a problem needs at least one step")

    @property
    def k(self) -> int:
        """Index of the last step."""
        return len(self.steps) - 1

    @property
    def state_length(self) -> int:
        return sum(s.n for s in self.steps)

    @property
    def row_count(self) -> int:
        return sum(s.ell + s.m for s in self.steps)

    @property
    def dims(self) -> list[int]:
        return [s.n for s in self.steps]


@dataclass
class SmoothResult:
    """Estimates and (optionally) their covariances, in original step order.

    ``cross`` maps ``(j, i)`` to the block ``S[j, i]`` of ``S = (R^T R)^{-1}``
    for every off-diagonal block position ``(j, i)`` of the triangular factor.
    ``timings`` holds per-phase wall-clock seconds and ``flops`` per-phase
    operation counts (filled only while a flop counter is active).
    """

    estimates: list[Array]
    covariances: list[Array] | None = None
    cross: dict[tuple[int, int], Array] | None = None
    timings: dict[str, float] = field(default_factory=dict)
    flops: dict[str, int] = field(default_factory=dict)

    def stacked(self) -> Array:
        return np.concatenate(self.estimates) if self.estimates else np.zeros(0)


# ----------------------------------------------------------------------------
# validation


def _shape_errors(i: int, name: str, a: Array | None, shape: tuple) -> list[str]:
    if a is None:
        return []
    if a.ndim == 1 and name in ("K", "L"):
        return [] if a.shape[0] == shape[0] else [f"step {i}: field {name} has diagonal length {a.shape[0]}, expected {shape[0]}"]
    if a.shape != shape:
        return [f"step {i}: field {name} has shape {a.shape}, expected {shape}"]
    return []


def validate(problem: SmootherProblem) -> list[str]:
    """Return every dimension-chain violation; an empty list means valid."""
    errors: list[str] = []
    prev_n = None
    for i, s in enumerate(problem.steps):
        n = s.n
        if i == 0:
            for name in ("F", "H", "c", "K"):
                if getattr(s, name) is not None:
                    errors.append(f"step 0: field {name} must be absent (no evolution equation)")
        else:
            if s.H is None or s.F is None:
                errors.append(f"step {i}: fields F and H are required")
            if s.H is not None:
                if s.H.ndim != 2:
                    errors.append(f"step {i}: field H must be a matrix")
                elif s.H.shape[1] != n:
                    errors.append(f"step {i}: field H has {s.H.shape[1]} columns, expected n={n}")
            ell = s.ell
            if s.F is not None:
                errors += _shape_errors(i, "F", s.F, (ell, prev_n))
            if s.c is not None:
                errors += _shape_errors(i, "c", s.c, (ell,))
            if s.K is None:
                errors.append(f"step {i}: field K is required")
            else:
                errors += _shape_errors(i, "K", s.K, (ell, ell))
        if s.G is not None:
            if s.G.ndim != 2:
                errors.append(f"step {i}: field G must be a matrix")
            else:
                m = s.G.shape[0]
                errors += _shape_errors(i, "G", s.G, (m, n))
                if m > 0:
                    if s.o is None:
                        errors.append(f"step {i}: field o is required when G is given")
                    else:
                        errors += _shape_errors(i, "o", s.o, (m,))
                    if s.L is None:
                        errors.append(f"step {i}: field L is required when G is given")
                    else:
                        errors += _shape_errors(i, "L", s.L, (m, m))
        elif s.o is not None and s.o.size > 0:
            errors.append(f"step {i}: field o given without G")
        prev_n = n
    return errors


# ----------------------------------------------------------------------------
# whitening


def _whiten(cov: Array, blocks: Sequence[Array], step: int, which: str) -> list[Array]:
    """Apply ``Lambda^{-1}`` to each block, where ``cov = Lambda Lambda^T``."""
    if cov.ndim == 1:
        if np.any(~(cov > 0.0)):
            raise FactorizationError(step, which)
        scale = 1.0 / np.sqrt(cov)
        return [b * scale[:, None] if b.ndim == 2 else b * scale for b in blocks]
    if cov.shape[0] == 0:
        return [np.array(b, copy=True) for b in blocks]
    tol = 1e-10 * max(1.0, float(np.abs(cov).max()))
    if np.abs(cov - cov.T).max() > tol:
        raise FactorizationError(step, which)
    try:
        lam = kernels.cholesky_lower(cov)
    except np.linalg.LinAlgError:
        raise FactorizationError(step, which) from None
    try:
        return [kernels.trsm(lam, b, lower=True, position=(step, which)) for b in blocks]
    except Exception:
        raise FactorizationError(step, which) from None


def whiten_step(s: StepInput, index: int = 0) -> WhitenedStep:
    """Whiten one step; ``index`` only labels errors."""
    n = s.n
    if s.m > 0:
        C, rhs_obs = _whiten(s.L, [s.G, s.o], index, "L")
    else:
        C, rhs_obs = np.zeros((0, n)), np.zeros(0)
    if not s.has_evolution:
        return WhitenedStep(C=np.ascontiguousarray(C), rhs_obs=rhs_obs)
    ell = s.ell
    c = s.c if s.c is not None else np.zeros(ell)
    B, D, rhs_evo = _whiten(s.K, [s.F, s.H, c], index, "K")
    return WhitenedStep(
        C=np.ascontiguousarray(C),
        rhs_obs=rhs_obs,
        B=np.ascontiguousarray(B),
        D=np.ascontiguousarray(D),
        rhs_evo=rhs_evo,
    )


def assemble(problem: SmootherProblem, pool=None) -> list[WhitenedStep]:
    """Whiten every step; steps are independent and may run on ``pool``."""
    errors = validate(problem)
    if errors:
        raise ContractError("invalid problem: " + "; ".join(errors))
    steps = problem.steps
    out: list[WhitenedStep | None] = [None] * len(steps)

    def body(i):
        out[i] = whiten_step(steps[i], i)

    if pool is None:
        for i in range(len(steps)):
            body(i)
    else:
        pool.parallel_for(len(steps), body)
    return out  # type: ignore[return-value]
