"""Posterior moment generating functions of U = theta/sigma2, V = 1/sigma2 and W(z) = U - zV.

For an observation (x, s2, k) and marginal density f,

    M_{U,V}(t1, t2) = (s2 / s2')^(k/2 - 1) * f(x + t1, s2') / f(x, s2),
    s2' = s2 - (2 t1 x + t1^2 + 2 t2) / k,

valid while s2' > 0. M_U, M_V and M_{W(z)}(t) = M_{U,V}(t, -z t) are slices of
this. Ratios are formed in log space, so a tiny f(x, s2) cannot overflow; an
optional ``floor`` on the denominator is available but off by default because a
floored denominator scales every M(t) below what any distribution can attain.

The array functions here are the engine's hot path; :class:`MgfEvaluator` is
the per-observation interface with domain checking.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .core import Observation
from .errors import DegreesOfFreedomError, DomainError, NumericalError

MOMENT_STEP_CAP = 1e-3


def shifted_variance(x, s2, k, t1, t2):
    return s2 - (2 * t1 * x + t1 * t1 + 2 * t2) / k


def log_f0(density, x, s2, k, floor: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """(log f(x, s2), log max(f(x, s2), floor))."""
    lf = np.asarray(density.logpdf(x, s2, k), dtype=float)
    if floor > 0:
        return lf, np.maximum(lf, math.log(floor))
    return lf, lf


def log_mgf_uv(density, x, s2, k, lf0, t1, t2) -> np.ndarray:
    """log M_{U,V}(t1, t2); the caller guarantees a positive shifted variance."""
    x, s2, k, lf0, t1, t2 = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (x, s2, k, lf0, t1, t2)))
    s2p = shifted_variance(x, s2, k, t1, t2)
    return (k / 2 - 1) * (np.log(s2) - np.log(s2p)) + density.logpdf(x + t1, s2p, k) - lf0


def log_mgf_w(density, x, s2, k, lf0, z, t) -> np.ndarray:
    z, t = np.broadcast_arrays(np.asarray(z, dtype=float), np.asarray(t, dtype=float))
    return log_mgf_uv(density, x, s2, k, lf0, t, -z * t)


def w_t_limits(x, s2, k, z) -> tuple[np.ndarray, np.ndarray]:
    """Largest valid |t| below and above zero for M_{W(z)}.

    The domain is t^2 + 2 t (x - z) - k s2 < 0, an interval around 0 with roots
    -(x - z) -/+ sqrt((x - z)^2 + k s2).
    """
    d = np.asarray(x, dtype=float) - np.asarray(z, dtype=float)
    ks2 = np.asarray(k, dtype=float) * np.asarray(s2, dtype=float)
    root = np.sqrt(d * d + ks2)
    # each root in its cancellation-free form: ks2 / (root + |d|) on the near side
    near = ks2 / (root + np.abs(d))
    far = root + np.abs(d)
    pos = np.where(d >= 0, near, far)
    neg = np.where(d <= 0, near, far)
    return neg, pos


class WMoments(NamedTuple):
    mean: np.ndarray
    var: np.ndarray
    floored: np.ndarray


def w_moments(density, x, s2, k, lf, lf0, z) -> WMoments:
    """Mean and variance of W(z) from central differences of log M_{W(z)} at 0.

    The second difference uses the evaluated log M(0) (zero unless the
    denominator was floored) so it differences the function actually used.
    A nonpositive variance is replaced by :func:`reference_w_variance`.
    """
    neg, pos = w_t_limits(x, s2, k, z)
    h = np.minimum(MOMENT_STEP_CAP, np.minimum(neg, pos) / 2)
    if np.any(~(h > 0)):
        raise NumericalError("no valid symmetric step for W(z) moments")
    ts = np.stack([h, -h])
    lm = log_mgf_w(density, x, s2, k, lf0, z, ts)
    l0 = np.asarray(lf, dtype=float) - np.asarray(lf0, dtype=float)
    mean = (lm[0] - lm[1]) / (2 * h)
    var = (lm[0] - 2 * l0 + lm[1]) / (h * h)
    if np.any(~np.isfinite(mean)) or np.any(np.isnan(var)):
        raise NumericalError("non-finite W(z) moments")
    floored = ~(var > 0)
    var = np.where(floored, reference_w_variance(x, s2, k, z), var)
    return WMoments(mean, var, floored)


def reference_w_variance(x, s2, k, z):
    """Var(W(z)) when theta ~ N(x, s2) and V ~ Gamma(k/2, rate k s2/2) independently.

    This is the spread of W(z) with no pooling across units; it stands in for a
    nonpositive estimated variance so the grid still spans the bulk of W(z).
    """
    x, s2, k, z = (np.asarray(a, dtype=float) for a in (x, s2, k, z))
    ev2 = (1 + 2 / k) / (s2 * s2)
    var_v = 2 / (k * s2 * s2)
    return ev2 * s2 + (x - z) ** 2 * var_v


class MgfEvaluator:
    """Posterior MGFs for one observation from a fitted (or closed-form) marginal density."""

    def __init__(self, obs: Observation, density, floor: float = 0.0):
        if not obs.k > 0:
            raise DegreesOfFreedomError(f"id {obs.id!r}: k must be > 0", (obs.id,))
        self.obs = obs
        self.density = density
        self.floor = floor
        lf, lf0 = log_f0(density, obs.x, obs.s2, obs.k, floor)
        self.log_f = float(lf)
        self.log_f0 = float(lf0)

    @property
    def f0(self) -> float:
        return math.exp(self.log_f0)

    @property
    def floored(self) -> bool:
        return self.log_f < self.log_f0

    def _eval(self, t1: float, t2: float) -> float:
        o = self.obs
        return float(np.exp(log_mgf_uv(self.density, o.x, o.s2, o.k, self.log_f0, t1, t2)))

    def _ray_limit(self, t1: float, t2: float) -> float:
        # largest c with c*(t1, t2) inside the domain, times |(t1, t2)|
        o = self.obs
        b = 2 * t1 * o.x + 2 * t2
        a = t1 * t1
        if a == 0:
            c = math.inf if b <= 0 else o.k * o.s2 / b
        else:
            c = (-b + math.sqrt(b * b + 4 * a * o.k * o.s2)) / (2 * a)
        return c * math.hypot(t1, t2)

    def mgf_uv(self, t1: float, t2: float) -> float:
        o = self.obs
        if not shifted_variance(o.x, o.s2, o.k, t1, t2) > 0:
            raise DomainError(
                f"id {o.id!r}: (t1, t2)=({t1}, {t2}) outside the MGF domain",
                self._ray_limit(t1, t2),
                (o.id,),
            )
        return self._eval(t1, t2)

    def mgf_u(self, t: float) -> float:
        return self.mgf_uv(t, 0.0)

    def mgf_v(self, t: float) -> float:
        return self.mgf_uv(0.0, t)

    def mgf_w(self, z: float, t: float) -> float:
        o = self.obs
        if not shifted_variance(o.x, o.s2, o.k, t, -z * t) > 0:
            neg, pos = w_t_limits(o.x, o.s2, o.k, z)
            raise DomainError(
                f"id {o.id!r}: t={t} outside the MGF domain of W({z})",
                float(pos if t > 0 else neg),
                (o.id,),
            )
        return self._eval(t, -z * t)

    def w_limits(self, z: float) -> tuple[float, float]:
        neg, pos = w_t_limits(self.obs.x, self.obs.s2, self.obs.k, z)
        return float(neg), float(pos)

    def mgf_w_moments(self, z: float) -> tuple[float, float, bool]:
        """(mean, variance, variance_floored) of W(z)."""
        o = self.obs
        m = w_moments(self.density, o.x, o.s2, o.k, self.log_f, self.log_f0, z)
        return float(m.mean), float(m.var), bool(m.floored)
