"""Synthetic benchmark problems: fixed random orthonormal dynamics, identity noise."""

from __future__ import annotations

import numpy as np

from ..model import SmootherProblem, StepInput


def random_orthonormal(rng: np.random.Generator, n: int) -> np.ndarray:
    """QR of a standard-normal matrix, with the diagonal of R made positive."""
    Q, R = np.linalg.qr(rng.standard_normal((n, n)))
    return Q * np.where(np.diagonal(R) < 0.0, -1.0, 1.0)


def generate_problem(k: int, n: int, seed: int) -> SmootherProblem:
    """Steps ``0..k`` with state and observation dimension ``n``.

    One orthonormal ``F`` and one orthonormal ``G`` are drawn and shared by
    every step; ``H = K = L = I`` and ``c = 0``. Observations are drawn
    independently for each step.
    """
    if k < 1 or n < 1:
        raise ValueError("k and n must be >= 1")
    rng = np.random.default_rng(seed)
    F = random_orthonormal(rng, n)
    G = random_orthonormal(rng, n)
    eye = np.eye(n)
    steps = [StepInput(G=G, o=rng.standard_normal(n), L=eye)]
    for _ in range(k):
        steps.append(StepInput(F=F, H=eye, G=G, o=rng.standard_normal(n), K=eye, L=eye))
    return SmootherProblem(steps)
