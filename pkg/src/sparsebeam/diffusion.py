"""Forward and reverse diffusion over sub-volume fields.

Closed-form noising of a clean field y0 (eps ~ N(0, I)):

    y_t = sqrt(alpha_bar(t)) * y0 + sqrt(1 - alpha_bar(t)) * eps

single Markov step:

    y_t = sqrt(1 - beta(t)) * y_{t-1} + sqrt(beta(t)) * eps

and the conditional reverse update driven by a noise predictor
``denoiser.evaluate(y_t, condition, t)``:

    y_{t-1} = lead(t) * (y_t - (1 - alpha(t)) / sqrt(1 - alpha_bar(t)) * eps_hat)
              + sigma(t) * xi

where ``lead(t)`` is 1/sqrt(alpha(t)) or 1/sqrt(alpha_bar(t)) depending on the
schedule's ``reverse_coeff`` toggle, and sigma(1) = 0 makes the final step
deterministic (and exactly invertible when eps_hat equals the true noise).

All elementwise math follows the dtype of the field arguments (schedule
scalars enter as Python floats); reductions accumulate in float64.
"""

from __future__ import annotations

import numpy as np

from . import rng
from .errors import ContractViolation, ShapeError
from .schedule import NoiseSchedule

__all__ = ["forward_diffuse", "forward_step", "reverse_step", "sample", "ddpm_loss"]


def _field(name: str, x) -> np.ndarray:
    x = np.asarray(x)
    if not np.issubdtype(x.dtype, np.floating):
        raise ShapeError(f"{name} must be a floating-point array, got dtype {x.dtype}")
    return x


def _same_shape(name_a: str, a: np.ndarray, name_b: str, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{name_a} shape {a.shape} != {name_b} shape {b.shape}")


def forward_diffuse(y0, t, eps, schedule: NoiseSchedule) -> np.ndarray:
    """Noise a clean field directly to step t."""
    y0 = _field("y0", y0)
    eps = _field("eps", eps)
    _same_shape("y0", y0, "eps", eps)
    abar = schedule.alpha_bar(schedule._check_t(t))
    return float(np.sqrt(abar)) * y0 + float(np.sqrt(1.0 - abar)) * eps


def forward_step(y_prev, t, eps, schedule: NoiseSchedule) -> np.ndarray:
    """One Markov noising step from y_{t-1} to y_t."""
    y_prev = _field("y_prev", y_prev)
    eps = _field("eps", eps)
    _same_shape("y_prev", y_prev, "eps", eps)
    beta = schedule.beta(t)
    return float(np.sqrt(1.0 - beta)) * y_prev + float(np.sqrt(beta)) * eps


def _predict(denoiser, y_t: np.ndarray, condition: np.ndarray, t: int) -> np.ndarray:
    eps_hat = denoiser.evaluate(y_t, condition, t)
    eps_hat = np.asarray(eps_hat)
    if eps_hat.shape != y_t.shape:
        raise ContractViolation(
            f"denoiser returned shape {eps_hat.shape}, expected {y_t.shape}")
    if not np.issubdtype(eps_hat.dtype, np.floating):
        raise ContractViolation(
            f"denoiser returned dtype {eps_hat.dtype}, expected floating point")
    return eps_hat


def reverse_step(y_t, condition, t, denoiser, schedule: NoiseSchedule,
                 xi=None) -> np.ndarray:
    """One conditional reverse update from y_t to y_{t-1}.

    ``xi`` is the unit-Gaussian perturbation; it is ignored at t = 1 where
    sigma is zero, and required otherwise.
    """
    y_t = _field("y_t", y_t)
    condition = _field("condition", condition)
    _same_shape("y_t", y_t, "condition", condition)
    t = schedule._check_t(t)
    eps_hat = _predict(denoiser, y_t, condition, t)

    alpha = schedule.alpha(t)
    abar = schedule.alpha_bar(t)
    lead = schedule.reverse_lead(t)
    mean = lead * (y_t - float((1.0 - alpha) / np.sqrt(1.0 - abar)) * eps_hat)

    sigma = schedule.sigma(t)
    if sigma == 0.0:
        return mean
    if xi is None:
        raise ShapeError(f"xi is required at t={t} where sigma > 0")
    xi = _field("xi", xi)
    _same_shape("xi", xi, "y_t", y_t)
    return mean + sigma * xi


def sample(condition, denoiser, schedule: NoiseSchedule, seed: int) -> np.ndarray:
    """Run the full reverse chain t = T..1 for one conditioned field.

    The initial state y_T and every per-step xi come from the counter-based
    stream keyed by ``seed`` (purposes "init" and "xi"), so the result is a
    pure function of (condition, denoiser, schedule, seed).  Draws are cast to
    the condition's dtype.
    """
    condition = _field("condition", condition)
    dtype = condition.dtype
    y = rng.gaussian_field(condition.shape, seed, t=schedule.T,
                           purpose="init").astype(dtype, copy=False)
    for t in range(schedule.T, 0, -1):
        xi = None
        if t > 1:
            xi = rng.gaussian_field(condition.shape, seed, t=t,
                                    purpose="xi").astype(dtype, copy=False)
        y = reverse_step(y, condition, t, denoiser, schedule, xi)
    return y


def ddpm_loss(eps, eps_hat) -> float:
    """Mean squared noise-prediction error, accumulated in float64."""
    eps = _field("eps", eps)
    eps_hat = _field("eps_hat", eps_hat)
    _same_shape("eps", eps, "eps_hat", eps_hat)
    d = eps.astype(np.float64, copy=False) - eps_hat.astype(np.float64, copy=False)
    return float(np.mean(d * d))
