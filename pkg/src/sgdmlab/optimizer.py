"""Momentum iteration core.

One step with momentum weights (lam, nu), step size a and error e:

    x_look = x + nu * (x - x_prev)
    g      = grad f(x_look) - e
    x_next = x + (lam * (x - x_prev) - a * g)

nu = 0 is the stochastic heavy-ball method, nu = lam the stochastic
Nesterov variant, lam = nu = 0 plain stochastic gradient descent.

The momentum-free interpolation z = x/(1-lam) - lam*x_prev/(1-lam)
follows the rescaled-gradient recursion z_next = z - a*g/(1-lam); the
merit function M(x, z) = f(z) + zeta*||z-x||^2 with zeta = 3L/(1-lam)
is the quantity that descends approximately across time windows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .noise import NoiseModel, NoiseStream, sample_noise
from .problems import Problem


@dataclass(frozen=True)
class MomentumParams:
    """Momentum weights: 0 <= lam < 1 (inertia), nu >= 0 (extrapolation)."""

    lam: float
    nu: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.lam < 1.0:
            raise ValueError("lam must lie in [0, 1)")
        if self.nu < 0.0:
            raise ValueError("nu must be >= 0")

    @classmethod
    def sgd(cls):
        return cls(0.0, 0.0)

    @classmethod
    def heavy_ball(cls, lam):
        return cls(float(lam), 0.0)

    @classmethod
    def nesterov(cls, lam):
        return cls(float(lam), float(lam))


@dataclass
class IterateState:
    """Step counter k >= 1 with the current and previous iterate.

    At k = 1 both iterates coincide (the run starts from a standstill).
    """

    k: int
    x_prev: np.ndarray
    x_curr: np.ndarray

    @classmethod
    def initial(cls, x0) -> "IterateState":
        x0 = np.asarray(x0, dtype=float)
        return cls(k=1, x_prev=x0.copy(), x_curr=x0.copy())


@dataclass
class StepRecord:
    k: int
    alpha: float
    g: np.ndarray
    e: np.ndarray
    f_curr: float
    grad_norm_curr: float


class DivergenceError(RuntimeError):
    """Non-finite values encountered inside a single-step evaluation."""


def sgdm_step(state: IterateState, params: MomentumParams, alpha_k: float,
              problem: Problem, noise: NoiseModel, stream: NoiseStream
              ) -> tuple[IterateState, StepRecord]:
    """One momentum step; returns the advanced state and a step record."""
    if alpha_k <= 0:
        raise ValueError("alpha_k must be > 0")
    x, xp = state.x_curr, state.x_prev
    dx = x - xp
    x_look = x + params.nu * dx if params.nu else x
    e = sample_noise(noise, stream, problem.dim)
    g = problem.grad(x_look) - e
    x_next = x + (params.lam * dx - alpha_k * g)
    if not np.all(np.isfinite(x_next)):
        raise DivergenceError(f"non-finite iterate at step {state.k}")
    rec = StepRecord(k=state.k, alpha=alpha_k, g=g, e=e,
                     f_curr=problem.f(x), grad_norm_curr=float(np.linalg.norm(problem.grad(x))))
    return IterateState(k=state.k + 1, x_prev=x, x_curr=x_next), rec


def auxiliary_z(state_or_x, lam: float, x_prev=None) -> np.ndarray:
    """Momentum-free interpolation z = x/(1-lam) - lam*x_prev/(1-lam).

    Accepts either an IterateState or an (x_curr, x_prev) pair.
    """
    if not 0.0 <= lam < 1.0:
        raise ValueError("lam must lie in [0, 1)")
    if isinstance(state_or_x, IterateState):
        x, xp = state_or_x.x_curr, state_or_x.x_prev
    else:
        x, xp = np.asarray(state_or_x, dtype=float), np.asarray(x_prev, dtype=float)
    if lam == 0.0:
        return x.copy() if hasattr(x, "copy") else x
    c = 1.0 / (1.0 - lam)
    return x * c - (lam * c) * xp


def merit_zeta(problem: Problem, params: MomentumParams) -> float:
    return 3.0 * problem.L / (1.0 - params.lam)


def merit_value(problem: Problem, params: MomentumParams, x, z) -> float:
    """M(x, z) = f(z) + zeta * ||z - x||^2 with zeta = 3L/(1-lam)."""
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    zeta = merit_zeta(problem, params)
    return problem.f(z) + zeta * float(np.dot(z - x, z - x))


def merit_gradient(problem: Problem, params: MomentumParams, x, z
                   ) -> tuple[np.ndarray, np.ndarray]:
    """Both blocks of grad M: (2*zeta*(x-z), grad f(z) + 2*zeta*(z-x))."""
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    zeta = merit_zeta(problem, params)
    gx = 2.0 * zeta * (x - z)
    gz = problem.grad(z) + 2.0 * zeta * (z - x)
    return gx, gz


def merit_value_batch(problem: Problem, params: MomentumParams, X, Z) -> np.ndarray:
    zeta = merit_zeta(problem, params)
    diff = Z - X
    return problem.f_batch(Z) + zeta * np.einsum("...d,...d->...", diff, diff)


def merit_grad_sq_batch(problem: Problem, params: MomentumParams, X, Z) -> np.ndarray:
    """||grad M||^2 over a batch, from the two blocks."""
    zeta = merit_zeta(problem, params)
    diff = Z - X
    gz = problem.grad_batch(Z) + (2.0 * zeta) * diff
    return (4.0 * zeta**2) * np.einsum("...d,...d->...", diff, diff) \
        + np.einsum("...d,...d->...", gz, gz)
