"""Variance-preserving diffusion with the tan-based log-SNR schedule.

Works on numpy arrays and, where it is just arithmetic (``diffuse``,
``loss_l1``), on torch tensors as well.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

DEFAULT_INFERENCE_LAMBDAS = (-2.6, -0.8, 2.0, 6.4, 9.8, 12.9, 14.4, 17.2)


@dataclass(frozen=True)
class ScheduleParams:
    lambda_0: float = 20.0
    lambda_1: float = -20.0

    def __post_init__(self):
        if not self.lambda_0 > self.lambda_1:
            raise ValueError("lambda_0 must exceed lambda_1 (log-SNR decreases in t)")

    @property
    def b(self) -> float:
        return math.atan(math.exp(-self.lambda_0 / 2.0))

    @property
    def a(self) -> float:
        return math.atan(math.exp(-self.lambda_1 / 2.0)) - self.b


@dataclass(frozen=True)
class TimePoint:
    t: float
    lam: float
    alpha: float
    sigma: float


@dataclass(frozen=True)
class InferenceSchedule:
    """Log-SNR values visited while sampling, noisiest first.

    The final hop goes to ``terminal`` (the schedule's lambda at t = 0).
    """

    lambdas: tuple = DEFAULT_INFERENCE_LAMBDAS
    terminal: float = 20.0

    def __post_init__(self):
        lams = tuple(float(v) for v in self.lambdas)
        object.__setattr__(self, "lambdas", lams)
        path = lams + (self.terminal,)
        if len(lams) < 1 or any(b <= a for a, b in zip(path, path[1:])):
            raise ValueError(f"inference log-SNRs must strictly increase, got {path}")

    @property
    def n_steps(self) -> int:
        return len(self.lambdas)


def schedule_at(p: ScheduleParams, t: float) -> TimePoint:
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    angle = p.a * t + p.b
    lam = -2.0 * math.log(math.tan(angle))
    return TimePoint(float(t), lam, math.cos(angle), math.sin(angle))


def schedule_arrays(p: ScheduleParams, t):
    """Vectorised (lambda, alpha, sigma) for an array of times."""
    t = np.asarray(t, dtype=np.float64)
    if np.any((t < 0.0) | (t > 1.0)):
        raise ValueError("times must lie in [0, 1]")
    angle = p.a * t + p.b
    return -2.0 * np.log(np.tan(angle)), np.cos(angle), np.sin(angle)


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def lambda_to_coeffs(lam: float) -> tuple[float, float]:
    """(alpha, sigma) with alpha**2 = sigmoid(lam) and sigma**2 = sigmoid(-lam)."""
    if not math.isfinite(lam):
        raise ValueError(f"log-SNR must be finite, got {lam}")
    return math.sqrt(_sigmoid(lam)), math.sqrt(_sigmoid(-lam))


def diffuse(x, tp: TimePoint, eps):
    """Sample z_t = alpha_t * x + sigma_t * eps."""
    if tuple(x.shape) != tuple(eps.shape):
        raise ValueError(f"shape mismatch: x {tuple(x.shape)} vs eps {tuple(eps.shape)}")
    return tp.alpha * x + tp.sigma * eps


def sample_times(u: float, k: int) -> list[float]:
    """Stratified batch times ``(u + i/k) mod 1`` for i = 1..k."""
    if k < 1:
        raise ValueError(f"batch size must be >= 1, got {k}")
    return [math.fmod(u + i / k, 1.0) for i in range(1, k + 1)]


def loss_l1(eps, eps_hat):
    """Mean absolute error."""
    if tuple(eps.shape) != tuple(eps_hat.shape):
        raise ValueError(f"shape mismatch: {tuple(eps.shape)} vs {tuple(eps_hat.shape)}")
    return abs(eps - eps_hat).mean()


def ddim_step(z_t, eps_hat, lam_t: float, lam_s: float):
    """One deterministic DDIM update from log-SNR ``lam_t`` to the cleaner ``lam_s``."""
    if not lam_s > lam_t:
        raise ValueError(f"lam_s ({lam_s}) must exceed lam_t ({lam_t})")
    alpha_t, sigma_t = lambda_to_coeffs(lam_t)
    alpha_s, sigma_s = lambda_to_coeffs(lam_s)
    x_hat = (z_t - sigma_t * eps_hat) / alpha_t
    return alpha_s * x_hat + sigma_s * eps_hat


NoisePredictor = Callable[[np.ndarray, np.ndarray, np.ndarray, float], np.ndarray]


def sample(
    model: NoisePredictor,
    x_l: np.ndarray,
    e_l: np.ndarray,
    sched: InferenceSchedule = InferenceSchedule(),
    rng: np.random.Generator | None = None,
    return_x0: bool = True,
) -> np.ndarray:
    """DDIM sampling from pure noise, one model call per scheduled log-SNR.

    With ``return_x0`` the last call's clean-signal estimate is returned;
    otherwise the latent after the final hop to ``sched.terminal``.
    """
    rng = np.random.default_rng() if rng is None else rng
    x_l = np.asarray(x_l)
    z = rng.standard_normal(x_l.shape)
    path = sched.lambdas + (sched.terminal,)
    x_hat = z
    for lam_t, lam_s in zip(path[:-1], path[1:]):
        eps_hat = np.asarray(model(z, x_l, e_l, lam_t), dtype=np.float64)
        alpha_t, sigma_t = lambda_to_coeffs(lam_t)
        x_hat = (z - sigma_t * eps_hat) / alpha_t
        z = ddim_step(z, eps_hat, lam_t, lam_s)
    return x_hat if return_x0 else z


def ode_coeffs(p: ScheduleParams, t: float) -> tuple[float, float]:
    """Drift ``f = d log alpha / dt`` and diffusion ``g**2`` of the probability-flow ODE.

    Closed forms: f = -a tan(at + b), g**2 = 2a tan(at + b). Both diverge as
    t -> 1 and g**2 -> 2a * exp(-lambda_0 / 2) as t -> 0.
    """
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    tan = math.tan(p.a * t + p.b)
    return -p.a * tan, 2.0 * p.a * tan

