"""Smooth objectives with explicit gradient-Lipschitz constants and the
run-level trace records shared by the whole solver stack.

Objectives and points are immutable after construction and safe to share
across concurrent runs; trace records are produced by exactly one run.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

import numpy as np


class TerminationCase(Enum):
    STATIONARY = "stationary"
    CASE1 = "case1"
    CASE2 = "case2"
    CASE3 = "case3"
    CASE4 = "case4"


@dataclass(frozen=True)
class Objective:
    """Smooth objective f with gradient and an explicit Lipschitz constant.

    ``lipschitz_L`` is never estimated silently by the solver: it shapes the
    inner stopping region, so it must be auditable by the caller.  Any upper
    bound on the true gradient-Lipschitz constant is valid.
    """

    f: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]
    lipschitz_L: float

    def __post_init__(self):
        if not self.lipschitz_L > 0:
            raise ValueError("lipschitz_L must be a positive real")

    def value(self, x: np.ndarray) -> float:
        return float(self.f(np.asarray(x, dtype=float)))

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.grad(np.asarray(x, dtype=float)), dtype=float)


def spectral_radius(Q: np.ndarray, tol: float = 1e-10, max_iter: int = 50_000) -> float:
    """Spectral radius of a symmetric matrix by power iteration.

    Converges to max |eig| through the norm-ratio estimate, which handles
    +/- eigenvalue pairs.  Deterministic start vector.
    """
    Q = np.asarray(Q, dtype=float)
    n = Q.shape[0]
    # fixed pseudo-random start avoids being orthogonal to the top eigenspace
    v = np.cos(np.arange(1, n + 1, dtype=float) * 0.71) + 1.0
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(max_iter):
        w = Q @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        new_est = nw
        v = w / nw
        if abs(new_est - est) <= tol * max(1.0, new_est):
            return float(new_est)
        est = new_est
    return float(est)


def quadratic_objective(Q: np.ndarray, b: np.ndarray) -> Objective:
    """Objective f(x) = 0.5 x'Qx - b'x with L set to the spectral radius of Q.

    Raises on asymmetric Q (relative asymmetry above 1e-12) or a degenerate
    Q with zero spectral radius (build an Objective directly in that case,
    with any valid positive L).
    """
    Q = np.asarray(Q, dtype=float)
    b = np.asarray(b, dtype=float)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1] or Q.shape[0] != b.shape[0]:
        raise ValueError("Q must be square and match b")
    scale = max(1.0, float(np.abs(Q).max()))
    if np.abs(Q - Q.T).max() > 1e-12 * scale:
        raise ValueError("Q must be symmetric (relative asymmetry > 1e-12)")
    L = spectral_radius(Q, tol=1e-10)
    if L <= 0.0:
        raise ValueError("Q has zero spectral radius; supply L explicitly")

    def f(x):
        return 0.5 * float(x @ (Q @ x)) - float(b @ x)

    def grad(x):
        return Q @ x - b

    return Objective(f=f, grad=grad, lipschitz_L=L)


def finite_difference_grad_check(obj: Objective, x: np.ndarray, h: float) -> float:
    """Max componentwise gap between central differences and obj.grad at x."""
    if not h > 0:
        raise ValueError("h must be positive")
    x = np.asarray(x, dtype=float)
    g = obj.gradient(x)
    worst = 0.0
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        fd = (obj.value(x + e) - obj.value(x - e)) / (2.0 * h)
        worst = max(worst, abs(fd - g[i]))
    return worst


@dataclass
class OuterStepRecord:
    """One outer iteration: the incoming point, the chain output, and the
    auxiliary point carrying the slope certificate."""

    k: int
    x: np.ndarray
    x_out: np.ndarray
    x_aux: np.ndarray
    f: float
    inner_steps: int
    case: TerminationCase
    pi_aux: float
    # populated only on in-memory runs; not persisted
    ssc_trace: Optional[object] = None
    g: Optional[np.ndarray] = None
    wall_ms: float = 0.0


@dataclass
class RunTrace:
    records: list = field(default_factory=list)
    config_hash: str = "adhoc"
    wall_time: float = 0.0

    def __post_init__(self):
        if self.records:
            self._check_indices()

    def _check_indices(self):
        for i, r in enumerate(self.records):
            if r.k != i:
                raise ValueError("record indices must be contiguous from 0")

    @property
    def points(self):
        return [r.x for r in self.records]

    @property
    def f_values(self):
        return np.array([r.f for r in self.records])
