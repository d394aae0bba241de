"""Point estimation: the heteroscedastic Tweedie-type Bayes rule, its tempered plug-in, and regret."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import Dataset, EngineConfig, Observation, require_shrinkable
from .density import partials
from .errors import DegreesOfFreedomError, NumericalError, ValidationError


@dataclass(frozen=True)
class ShrinkageResult:
    id: str
    theta_hat: float
    raw_x: float
    denominator: float
    floored: bool


def bayes_estimate(f: float, f_x: float, f_s2: float, obs: Observation) -> float:
    """x + k s2 f_x / ((k - 2) f - 2 s2 f_s2) for exact density inputs."""
    if not obs.k > 2:
        raise DegreesOfFreedomError(f"id {obs.id!r}: k must exceed 2", (obs.id,))
    den = (obs.k - 2) * f - 2 * obs.s2 * f_s2
    if den == 0:
        raise NumericalError(f"id {obs.id!r}: zero denominator in the Bayes estimator", (obs.id,))
    return obs.x + obs.k * obs.s2 * f_x / den


def tempered_estimates(f, f_x, f_s2, x, s2, k, rho: float):
    """Vectorized tempered rule; returns (theta_hat, denominator, floored)."""
    den = (k - 2) * f - 2 * s2 * f_s2
    floored = den < rho
    theta = x + k * s2 * f_x / np.maximum(den, rho)
    return theta, den, floored


def ebt_estimates(model, data: Dataset, cfg: EngineConfig | None = None) -> list[ShrinkageResult]:
    """Tempered empirical Bayes estimates for every observation of ``data``."""
    cfg = cfg or EngineConfig()
    require_shrinkable(data)
    f, fx, fs2 = partials(model, data.x, data.s2, data.k, cfg.fd_step_cap)
    theta, den, floored = tempered_estimates(f, fx, fs2, data.x, data.s2, data.k, cfg.rho)
    if not np.all(np.isfinite(theta)):
        bad = tuple(i for i, v in zip(data.ids, theta) if not np.isfinite(v))
        raise NumericalError("non-finite shrinkage estimate", bad)
    return [
        ShrinkageResult(o.id, float(t), o.x, float(d), bool(fl))
        for o, t, d, fl in zip(data.observations, theta, den, floored)
    ]


def ebt_estimate(model, obs: Observation, cfg: EngineConfig | None = None) -> ShrinkageResult:
    cfg = cfg or EngineConfig()
    if not obs.k > 2:
        raise DegreesOfFreedomError(f"id {obs.id!r}: k must exceed 2", (obs.id,))
    f, fx, fs2 = partials(model, obs.x, obs.s2, obs.k, cfg.fd_step_cap)
    theta, den, floored = tempered_estimates(f, fx, fs2, obs.x, obs.s2, obs.k, cfg.rho)
    return ShrinkageResult(obs.id, float(theta), obs.x, float(den), bool(floored))


def weighted_loss(theta_hat, theta, sigma2) -> float:
    """n^-1 sum (theta_hat - theta)^2 / sigma2."""
    theta_hat, theta, sigma2 = (np.asarray(a, dtype=float) for a in (theta_hat, theta, sigma2))
    return float(np.mean((theta_hat - theta) ** 2 / sigma2))


def regret_diagnostic(theta_hat: Sequence[float], theta_bayes: Sequence[float], sigma2: Sequence[float]) -> float:
    """Empirical regret n^-1 sum (theta_hat - theta_B)^2 / sigma2; simulation use only."""
    a, b, s = (np.asarray(v, dtype=float) for v in (theta_hat, theta_bayes, sigma2))
    if not (a.shape == b.shape == s.shape):
        raise ValidationError("regret_diagnostic: length mismatch")
    if np.any(~(s > 0)):
        raise ValidationError("regret_diagnostic: sigma2 must be positive")
    return float(np.mean((a - b) ** 2 / s))
