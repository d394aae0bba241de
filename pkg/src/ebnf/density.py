"""Gaussian product-kernel density estimates of (x, log s2), reported on the (x, s2) scale.

Two models share one evaluation protocol, ``logpdf(x, s2, k)`` / ``pdf(x, s2, k)``:

* :class:`MarginalDensityModel`: bivariate KDE, ignores ``k``;
* :class:`ConditionalDensityModel`: trivariate KDE over (x, log s2, k) divided by
  the univariate KDE of k, for data with unequal degrees of freedom.

Every evaluation is row-independent (a query's value never depends on the other
queries in the same call), which the CLI relies on for chunked parallel runs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from .core import Dataset, EngineConfig
from .errors import SupportError, ValidationError

LOG_2PI = math.log(2.0 * math.pi)
_CHUNK_ELEMENTS = 1 << 21
MODEL_FORMAT = "ebnf-density"
MODEL_VERSION = 1


def silverman_bandwidth(values) -> float:
    """1.06 * min(sd, IQR / 1.349) * n^(-1/5); sd alone when the IQR vanishes."""
    v = np.asarray(values, dtype=float).ravel()
    n = v.size
    if n < 2:
        raise ValidationError("bandwidth selection needs at least 2 values")
    sd = float(np.std(v, ddof=1))
    if not sd > 0:
        raise ValidationError("bandwidth selection on a constant sample")
    q75, q25 = np.percentile(v, [75, 25])
    iqr = float(q75 - q25)
    spread = min(sd, iqr / 1.349) if iqr > 0 else sd
    return 1.06 * spread * n ** (-0.2)


def _log_kernel_sums(queries: list[np.ndarray], points: list[np.ndarray], bandwidths: list[float]) -> np.ndarray:
    """log sum_i exp(-sum_d (q_d - p_di)^2 / (2 h_d^2)) for every query row."""
    nq = queries[0].size
    npts = points[0].size
    scaled_p = [p / h for p, h in zip(points, bandwidths)]
    scaled_q = [q / h for q, h in zip(queries, bandwidths)]
    out = np.empty(nq)
    step = max(1, _CHUNK_ELEMENTS // max(npts, 1))
    for lo in range(0, nq, step):
        hi = min(nq, lo + step)
        a = np.zeros((hi - lo, npts))
        for q, p in zip(scaled_q, scaled_p):
            d = q[lo:hi, None] - p[None, :]
            a -= 0.5 * d * d
        m = a.max(axis=1)
        out[lo:hi] = m + np.log(np.exp(a - m[:, None]).sum(axis=1))
    return out


def _check_s2(s2: np.ndarray) -> None:
    if np.any(~(s2 > 0)):
        raise ValidationError("density evaluation needs s2 > 0")


@dataclass(frozen=True, eq=False)
class MarginalDensityModel:
    points_x: np.ndarray
    points_log_s2: np.ndarray
    bandwidth_x: float
    bandwidth_s: float
    floor_rho: float = 0.0

    def __post_init__(self):
        if not (self.bandwidth_x > 0 and self.bandwidth_s > 0):
            raise ValidationError("bandwidths must be positive")
        if self.points_x.shape != self.points_log_s2.shape or self.points_x.ndim != 1:
            raise ValidationError("training columns must be 1-d and equally long")

    @property
    def n(self) -> int:
        return int(self.points_x.size)

    def logpdf(self, x, s2, k=None) -> np.ndarray:
        x, s2 = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(s2, dtype=float))
        _check_s2(s2)
        ls = np.log(s2)
        sums = _log_kernel_sums(
            [x.ravel(), ls.ravel()],
            [self.points_x, self.points_log_s2],
            [self.bandwidth_x, self.bandwidth_s],
        )
        norm = math.log(self.n * self.bandwidth_x * self.bandwidth_s) + LOG_2PI
        return (sums - norm).reshape(x.shape) - ls

    def pdf(self, x, s2, k=None) -> np.ndarray:
        return np.exp(self.logpdf(x, s2, k))

    def to_dict(self) -> dict[str, Any]:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "kind": "bivariate",
            "bandwidth_x": self.bandwidth_x,
            "bandwidth_s": self.bandwidth_s,
            "floor_rho": self.floor_rho,
            "points_x": self.points_x.tolist(),
            "points_log_s2": self.points_log_s2.tolist(),
        }


@dataclass(frozen=True, eq=False)
class ConditionalDensityModel:
    """f(x, s2 | k) = f_J(x, s2, k) / f_M(k), k treated as continuous."""

    points_x: np.ndarray
    points_log_s2: np.ndarray
    points_k: np.ndarray
    bandwidth_x: float
    bandwidth_s: float
    bandwidth_k: float
    floor_rho: float = 0.0
    min_marginal_k: float = 1e-300

    def __post_init__(self):
        if not (self.bandwidth_x > 0 and self.bandwidth_s > 0 and self.bandwidth_k > 0):
            raise ValidationError("bandwidths must be positive")

    @property
    def n(self) -> int:
        return int(self.points_x.size)

    @property
    def k_support(self) -> tuple[float, float]:
        return (
            float(self.points_k.min() - 3 * self.bandwidth_k),
            float(self.points_k.max() + 3 * self.bandwidth_k),
        )

    def log_joint(self, x, log_s2, k) -> np.ndarray:
        """Trivariate KDE of (x, log s2, k)."""
        x, log_s2, k = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (x, log_s2, k)))
        sums = _log_kernel_sums(
            [x.ravel(), log_s2.ravel(), k.ravel()],
            [self.points_x, self.points_log_s2, self.points_k],
            [self.bandwidth_x, self.bandwidth_s, self.bandwidth_k],
        )
        norm = math.log(self.n * self.bandwidth_x * self.bandwidth_s * self.bandwidth_k) + 1.5 * LOG_2PI
        return (sums - norm).reshape(x.shape)

    def log_marginal_k(self, k) -> np.ndarray:
        k = np.asarray(k, dtype=float)
        sums = _log_kernel_sums([k.ravel()], [self.points_k], [self.bandwidth_k])
        norm = math.log(self.n * self.bandwidth_k) + 0.5 * LOG_2PI
        return (sums - norm).reshape(k.shape)

    def logpdf(self, x, s2, k) -> np.ndarray:
        if k is None:
            raise ValidationError("conditional density needs k")
        x, s2, k = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (x, s2, k)))
        _check_s2(s2)
        lo, hi = self.k_support
        outside = (k < lo) | (k > hi)
        if np.any(outside):
            raise SupportError(f"k={float(k[outside].flat[0])} outside the supported range [{lo:.4g}, {hi:.4g}]")
        lm = self.log_marginal_k(k)
        if np.any(lm < math.log(self.min_marginal_k)):
            raise SupportError("marginal density of k below machine floor")
        ls = np.log(s2)
        return self.log_joint(x, ls, k) - lm - ls

    def pdf(self, x, s2, k) -> np.ndarray:
        return np.exp(self.logpdf(x, s2, k))

    def to_dict(self) -> dict[str, Any]:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "kind": "conditional",
            "bandwidth_x": self.bandwidth_x,
            "bandwidth_s": self.bandwidth_s,
            "bandwidth_k": self.bandwidth_k,
            "floor_rho": self.floor_rho,
            "points_x": self.points_x.tolist(),
            "points_log_s2": self.points_log_s2.tolist(),
            "points_k": self.points_k.tolist(),
        }


DensityModel = MarginalDensityModel | ConditionalDensityModel


def _check_size(data: Dataset, cfg: EngineConfig) -> None:
    if len(data) < cfg.min_fit_size:
        raise ValidationError(f"density fit needs at least {cfg.min_fit_size} observations, got {len(data)}")


def fit(data: Dataset, cfg: EngineConfig | None = None) -> MarginalDensityModel:
    cfg = cfg or EngineConfig()
    _check_size(data, cfg)
    ls = np.log(data.s2)
    try:
        hx = silverman_bandwidth(data.x)
    except ValidationError as exc:
        raise ValidationError(f"x column: {exc}") from None
    try:
        hs = silverman_bandwidth(ls)
    except ValidationError as exc:
        raise ValidationError(f"log s2 column: {exc}") from None
    return MarginalDensityModel(data.x.copy(), ls, hx, hs, cfg.rho)


def fit_conditional(
    data: Dataset, cfg: EngineConfig | None = None, bandwidth_k: float | None = None
) -> ConditionalDensityModel:
    """Fit the conditional-on-k model.

    A dataset with a single k value has no Silverman bandwidth for k; pass
    ``bandwidth_k`` explicitly in that case (the ratio then reduces to the
    bivariate estimate for any positive bandwidth).
    """
    cfg = cfg or EngineConfig()
    if data.homogeneous_k and bandwidth_k is None:
        raise ValidationError("all k are equal; use the bivariate fit or pass bandwidth_k")
    biv = fit(data, cfg)
    hk = silverman_bandwidth(data.k) if bandwidth_k is None else float(bandwidth_k)
    return ConditionalDensityModel(
        biv.points_x, biv.points_log_s2, data.k.copy(), biv.bandwidth_x, biv.bandwidth_s, hk, cfg.rho
    )


def fit_auto(data: Dataset, cfg: EngineConfig | None = None) -> DensityModel:
    """Bivariate model when every unit shares k, conditional model otherwise."""
    return fit(data, cfg) if data.homogeneous_k else fit_conditional(data, cfg)


def eval_f(model: DensityModel, x, s2, k=None):
    out = model.pdf(x, s2, k)
    return float(out) if out.ndim == 0 else out


def fd_step(s2, cap: float):
    return np.minimum(cap, np.asarray(s2, dtype=float) / 2.0)


def partials(model: DensityModel, x, s2, k, cap: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Density and symmetric finite-difference partials in x and s2 (same step e for both)."""
    x, s2 = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(s2, dtype=float))
    if np.any(~(s2 > 0)):
        raise ValidationError("density evaluation needs s2 > 0")
    kk = None if k is None else np.broadcast_to(np.asarray(k, dtype=float), x.shape)
    e = fd_step(s2, cap)
    qx = np.stack([x, x + e, x - e, x, x])
    qs = np.stack([s2, s2, s2, s2 + e, s2 - e])
    qk = None if kk is None else np.stack([kk] * 5)
    v = model.pdf(qx, qs, qk)
    f = v[0]
    fx = (v[1] - v[2]) / (2 * e)
    fs2 = (v[3] - v[4]) / (2 * e)
    return f, fx, fs2


def eval_partials(model: DensityModel, x, s2, cfg: EngineConfig | None = None, k=None):
    cfg = cfg or EngineConfig()
    f, fx, fs2 = partials(model, x, s2, k, cfg.fd_step_cap)
    if f.ndim == 0:
        return float(f), float(fx), float(fs2)
    return f, fx, fs2


def eval_conditional(model: ConditionalDensityModel, x, s2, k, cfg: EngineConfig | None = None):
    return eval_partials(model, x, s2, cfg, k=k)


def model_from_dict(d: dict[str, Any]) -> DensityModel:
    if d.get("format") != MODEL_FORMAT:
        raise ValidationError("not an ebnf density model")
    if d.get("version") != MODEL_VERSION:
        raise ValidationError(f"unsupported model version {d.get('version')!r}")
    px = np.asarray(d["points_x"], dtype=float)
    pls = np.asarray(d["points_log_s2"], dtype=float)
    if d["kind"] == "bivariate":
        return MarginalDensityModel(px, pls, float(d["bandwidth_x"]), float(d["bandwidth_s"]), float(d["floor_rho"]))
    if d["kind"] == "conditional":
        return ConditionalDensityModel(
            px,
            pls,
            np.asarray(d["points_k"], dtype=float),
            float(d["bandwidth_x"]),
            float(d["bandwidth_s"]),
            float(d["bandwidth_k"]),
            float(d["floor_rho"]),
        )
    raise ValidationError(f"unknown model kind {d['kind']!r}")


def save_model(model: DensityModel, path: str | Path | None) -> str:
    text = json.dumps(model.to_dict(), indent=1) + "\n"
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def load_model(path: str | Path) -> DensityModel:
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"cannot parse model {path}: {exc}") from None
    return model_from_dict(d)
