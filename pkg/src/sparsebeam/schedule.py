"""Variance schedules for the diffusion process.

A schedule fixes, for timesteps t = 1..T:

* ``beta(t)``      per-step noise variance (linear ramp between the endpoints),
* ``alpha(t)``     = 1 - beta(t),
* ``alpha_bar(t)`` = prod_{i<=t} alpha(i), with the convention alpha_bar(0) = 1,
* ``sigma(t)``     reverse-step noise scale: sigma(1) = 0, sigma(t) = sqrt(beta(t)).

``reverse_coeff`` selects the leading factor of the reverse update:
``"alpha"`` (default) uses 1/sqrt(alpha(t)); ``"alpha_bar"`` uses
1/sqrt(alpha_bar(t)).  Both are exposed because published presentations of the
update rule differ in this coefficient; the toggle makes either form
reproducible exactly.

Internally everything is float64; per-step scalars are handed out as Python
floats so that downstream elementwise math follows the dtype of the field
arrays it touches.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, StepError

__all__ = ["NoiseSchedule", "linear_schedule", "save_schedule", "load_schedule"]

_VARIANTS = ("linear",)
_SIGMA_RULES = ("beta",)
_REVERSE_COEFFS = ("alpha", "alpha_bar")


@dataclass(eq=False)
class NoiseSchedule:
    """Precomputed diffusion schedule over timesteps 1..T."""

    T: int
    beta_start: float
    beta_end: float
    variant: str = "linear"
    sigma_rule: str = "beta"
    reverse_coeff: str = "alpha"
    betas: np.ndarray = field(init=False, repr=False)
    alphas: np.ndarray = field(init=False, repr=False)
    alpha_bars: np.ndarray = field(init=False, repr=False)
    sigmas: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not isinstance(self.T, (int, np.integer)) or isinstance(self.T, bool) or self.T < 1:
            raise ConfigurationError(f"T must be a positive integer, got {self.T!r}")
        if self.variant not in _VARIANTS:
            raise ConfigurationError(f"unknown schedule variant {self.variant!r}")
        if self.sigma_rule not in _SIGMA_RULES:
            raise ConfigurationError(f"unknown sigma rule {self.sigma_rule!r}")
        if self.reverse_coeff not in _REVERSE_COEFFS:
            raise ConfigurationError(f"reverse_coeff must be one of {_REVERSE_COEFFS}, "
                                     f"got {self.reverse_coeff!r}")
        bs, be = float(self.beta_start), float(self.beta_end)
        if not (0.0 < bs < 1.0) or not (0.0 < be < 1.0):
            raise ConfigurationError("beta endpoints must lie in (0, 1)")
        if bs > be:
            raise ConfigurationError("beta_start must not exceed beta_end")
        self.T = int(self.T)
        self.betas = np.linspace(bs, be, self.T, dtype=np.float64)
        self.alphas = 1.0 - self.betas
        self.alpha_bars = np.cumprod(self.alphas)
        sig = np.sqrt(self.betas)
        sig[0] = 0.0  # deterministic final step
        self.sigmas = sig

    # -- per-step accessors (t is 1-based) -----------------------------------

    def _check_t(self, t, lo: int = 1) -> int:
        if not isinstance(t, (int, np.integer)) or isinstance(t, bool):
            raise StepError(f"timestep must be an integer, got {t!r}")
        t = int(t)
        if not (lo <= t <= self.T):
            raise StepError(f"timestep {t} outside valid range {lo}..{self.T}")
        return t

    def beta(self, t) -> float:
        return float(self.betas[self._check_t(t) - 1])

    def alpha(self, t) -> float:
        return float(self.alphas[self._check_t(t) - 1])

    def alpha_bar(self, t) -> float:
        t = self._check_t(t, lo=0)
        return 1.0 if t == 0 else float(self.alpha_bars[t - 1])

    def sigma(self, t) -> float:
        return float(self.sigmas[self._check_t(t) - 1])

    def reverse_lead(self, t) -> float:
        """Leading reverse-update factor 1/sqrt(alpha or alpha_bar) at step t."""
        t = self._check_t(t)
        if self.reverse_coeff == "alpha":
            return float(1.0 / np.sqrt(self.alphas[t - 1]))
        return float(1.0 / np.sqrt(self.alpha_bars[t - 1]))

    # -- serialization --------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "T": self.T,
            "beta_start": float(self.beta_start),
            "beta_end": float(self.beta_end),
            "variant": self.variant,
            "sigma_rule": self.sigma_rule,
            "reverse_coeff": self.reverse_coeff,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseSchedule":
        if not isinstance(d, dict):
            raise ConfigurationError("schedule document must be a JSON object")
        known = {"T", "beta_start", "beta_end", "variant", "sigma_rule", "reverse_coeff"}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown schedule keys: {sorted(unknown)}")
        missing = {"T", "beta_start", "beta_end"} - set(d)
        if missing:
            raise ConfigurationError(f"schedule document missing keys: {sorted(missing)}")
        return cls(T=d["T"], beta_start=d["beta_start"], beta_end=d["beta_end"],
                   variant=d.get("variant", "linear"),
                   sigma_rule=d.get("sigma_rule", "beta"),
                   reverse_coeff=d.get("reverse_coeff", "alpha"))


def linear_schedule(T: int = 1000, beta_start: float = 1e-4, beta_end: float = 2e-2,
                    reverse_coeff: str = "alpha") -> NoiseSchedule:
    """Linear beta ramp; the defaults give alpha_bar(T) < 1e-4 at T = 1000."""
    return NoiseSchedule(T=T, beta_start=beta_start, beta_end=beta_end,
                         reverse_coeff=reverse_coeff)


def save_schedule(schedule: NoiseSchedule, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(schedule.to_dict(), fh, indent=2)
        fh.write("\n")


def load_schedule(path) -> NoiseSchedule:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"schedule file {path} is not valid JSON: {exc}") from exc
    return NoiseSchedule.from_dict(doc)
