"""Gradient-based training of the conv denoiser.

The loss is the noise-prediction MSE: clean blocks are noised to a uniformly
drawn step t with fresh Gaussian noise, and the net is regressed onto that
noise.  Optimization is Adam-style with decoupled weight decay (the decay
term is applied directly to the parameters, outside the moment estimates):

    m <- b1 m + (1-b1) g          v <- b2 v + (1-b2) g^2
    theta <- theta - lr * ( m_hat / (sqrt(v_hat) + eps) + wd * theta )

with bias-corrected m_hat, v_hat.  The learning rate decays linearly from
``lr_start`` to ``lr_end`` over the run.

Every random draw (batch selection, timesteps, noise) comes from one
counter-based generator per iteration, keyed by (seed, "train", iteration),
so training is bit-reproducible for a fixed config and dataset.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rng
from .denoiser import ConvDenoiser
from .errors import ConfigurationError, ShapeError, TrainingDivergenceError
from .schedule import NoiseSchedule

__all__ = ["TrainConfig", "TrainingLog", "AdamW", "backprop_loss", "train",
           "VolumePairSampler", "GaussianPairSampler", "suggest_data_scale"]


@dataclass
class TrainConfig:
    iterations: int = 2000
    batch_size: int = 8
    lr_start: float = 1e-4
    lr_end: float = 1e-5
    weight_decay: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 0 or self.batch_size < 1:
            raise ConfigurationError("iterations must be >= 0 and batch_size >= 1")
        if self.lr_start <= 0 or self.lr_end <= 0:
            raise ConfigurationError("learning rates must be positive")


@dataclass
class TrainingLog:
    losses: list = field(default_factory=list)
    lrs: list = field(default_factory=list)


class AdamW:
    """Adam with decoupled weight decay; moments kept in float64."""

    def __init__(self, size: int, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8, weight_decay: float = 1e-4):
        self.beta1, self.beta2, self.eps, self.weight_decay = beta1, beta2, eps, weight_decay
        self.m = np.zeros(size, dtype=np.float64)
        self.v = np.zeros(size, dtype=np.float64)
        self.steps = 0

    def step(self, theta: np.ndarray, grad: np.ndarray, lr: float) -> np.ndarray:
        grad = np.asarray(grad, dtype=np.float64)
        self.steps += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1 ** self.steps)
        v_hat = self.v / (1.0 - self.beta2 ** self.steps)
        theta64 = np.asarray(theta, dtype=np.float64)
        update = m_hat / (np.sqrt(v_hat) + self.eps) + self.weight_decay * theta64
        return (theta64 - lr * update).astype(np.asarray(theta).dtype)


def backprop_loss(denoiser: ConvDenoiser, clean, condition, t, eps,
                  schedule: NoiseSchedule):
    """Noise-prediction MSE and its analytic gradient over all parameters.

    clean, condition, eps: (B, d0, d1, d2); t: (B,) integer steps in 1..T.
    Returns (loss: float, grad: flat array in parameter order).
    """
    dtype = denoiser.params["conv_in.w"].dtype
    clean = np.asarray(clean, dtype=dtype)
    condition = np.asarray(condition, dtype=dtype)
    eps = np.asarray(eps, dtype=dtype)
    if clean.shape != condition.shape or clean.shape != eps.shape:
        raise ShapeError("clean, condition, and eps batches must share one shape")
    t = np.atleast_1d(np.asarray(t))
    if t.shape != (clean.shape[0],):
        raise ShapeError(f"t must have shape ({clean.shape[0]},), got {t.shape}")
    if np.any(t < 1) or np.any(t > schedule.T):
        raise ShapeError(f"timesteps must lie in 1..{schedule.T}")

    abar = schedule.alpha_bars[np.asarray(t, dtype=np.int64) - 1]
    cs = np.sqrt(abar).astype(dtype)[:, None, None, None]
    cn = np.sqrt(1.0 - abar).astype(dtype)[:, None, None, None]
    y_t = cs * clean + cn * eps

    eps_hat, cache = denoiser.net.forward(denoiser.params, y_t, condition, t,
                                          want_cache=True)
    diff = eps_hat - eps
    loss = float(np.mean(diff.astype(np.float64) ** 2))
    d_eps_hat = diff * dtype.type(2.0 / diff.size)
    grads = denoiser.net.backward(denoiser.params, cache, d_eps_hat)
    return loss, denoiser.net.flatten(grads)


def train(denoiser: ConvDenoiser, sampler, schedule: NoiseSchedule,
          config: TrainConfig) -> TrainingLog:
    """Run the training loop in place on ``denoiser``; returns the loss/lr log.

    Per iteration i, draws come in a fixed order from the generator keyed by
    (config.seed, "train", i): first the sampler's batch, then the timesteps,
    then the noise.  A non-finite loss aborts with the iteration index.
    """
    theta = denoiser.get_flat()
    opt = AdamW(theta.size, config.beta1, config.beta2, config.adam_eps,
                config.weight_decay)
    log = TrainingLog()
    for i in range(config.iterations):
        gen = rng.generator(config.seed, domain="train", block=i)
        clean, condition = sampler.draw_batch(gen, config.batch_size)
        t = gen.integers(1, schedule.T + 1, size=config.batch_size)
        eps = gen.standard_normal(np.asarray(clean).shape).astype(np.float32)
        loss, grad = backprop_loss(denoiser, clean, condition, t, eps, schedule)
        if not np.isfinite(loss):
            raise TrainingDivergenceError(f"non-finite loss at iteration {i}")
        if config.iterations > 1:
            frac = i / (config.iterations - 1)
        else:
            frac = 0.0
        lr = config.lr_start + (config.lr_end - config.lr_start) * frac
        theta = opt.step(theta, grad, lr)
        denoiser.set_flat(theta)
        log.losses.append(loss)
        log.lrs.append(lr)
    return log


class VolumePairSampler:
    """Aligned random blocks from (clean, condition) field pairs.

    Draw order per batch element: volume index, then one corner offset per
    axis — all from the generator passed in, so batches are reproducible.
    """

    def __init__(self, pairs, block_size=(16, 16, 16)):
        self.block_size = tuple(int(b) for b in block_size)
        self.pairs = []
        for clean, cond in pairs:
            clean = np.asarray(clean)
            cond = np.asarray(cond)
            if clean.shape != cond.shape:
                raise ShapeError(f"pair shapes differ: {clean.shape} vs {cond.shape}")
            if any(d < b for d, b in zip(clean.shape, self.block_size)):
                raise ShapeError(f"field {clean.shape} smaller than block {self.block_size}")
            self.pairs.append((clean, cond))
        if not self.pairs:
            raise ConfigurationError("sampler needs at least one field pair")

    def draw_batch(self, gen: np.random.Generator, n: int):
        cleans, conds = [], []
        for _ in range(n):
            clean, cond = self.pairs[int(gen.integers(0, len(self.pairs)))]
            corner = tuple(int(gen.integers(0, d - b + 1))
                           for d, b in zip(clean.shape, self.block_size))
            sl = tuple(slice(c, c + b) for c, b in zip(corner, self.block_size))
            cleans.append(clean[sl])
            conds.append(cond[sl])
        return np.stack(cleans), np.stack(conds)


class GaussianPairSampler:
    """Toy dataset: constant-mean blocks with the block itself as condition."""

    def __init__(self, mean: float = 0.5, std: float = 0.2, block_size=(8, 8, 8)):
        self.mean, self.std = float(mean), float(std)
        self.block_size = tuple(int(b) for b in block_size)

    def draw_batch(self, gen: np.random.Generator, n: int):
        levels = gen.normal(self.mean, self.std, size=n).astype(np.float32)
        clean = np.broadcast_to(levels[:, None, None, None],
                                (n, *self.block_size)).copy()
        return clean, clean.copy()


def suggest_data_scale(fields) -> float:
    """Normalization constant: the 99.5th percentile of |values| over the fields."""
    mags = np.concatenate([np.abs(np.asarray(f, dtype=np.float64)).ravel()
                           for f in fields])
    scale = float(np.percentile(mags, 99.5))
    return scale if scale > 0 else 1.0
