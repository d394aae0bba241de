"""Interval-null hypothesis tests: posterior null probabilities, FDR rules, t-test baseline."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np
from scipy import special

from .core import Observation
from .errors import ValidationError
from .posterior import PosteriorCdf


class Method(str, Enum):
    NF = "NF"
    TTEST = "TTEST"
    BH = "BH"


@dataclass(frozen=True)
class TestResult:
    __test__ = False  # keep pytest from collecting this

    id: str
    pn: float
    p_value: float
    rejected: bool
    method: Method


def posterior_null_probs(pc: PosteriorCdf, delta: float, idx=None) -> np.ndarray:
    """P(-delta <= theta_i <= delta | D) = F_i(delta) - F_i(-delta), clamped to [0, 1]."""
    if not delta >= 0:
        raise ValidationError("delta must be >= 0")
    idx = np.arange(pc.n) if idx is None else np.asarray(idx, dtype=int)
    lower = pc.cdf(np.full(idx.size, -float(delta)), idx)
    upper = pc.cdf(np.full(idx.size, float(delta)), idx)
    return np.clip(upper - lower, 0.0, 1.0)


def posterior_null_prob(pc: PosteriorCdf, delta: float) -> float:
    return float(posterior_null_probs(pc, delta, np.array([0]))[0])


def fdr_reject(pns: Sequence[float], alpha: float) -> np.ndarray:
    """Step-up on posterior null probabilities.

    Sort ascending and reject the longest prefix whose running mean (the
    estimated FDR of rejecting it) is at most ``alpha``. Returns the rejected
    indices in original order.
    """
    p = np.asarray(pns, dtype=float)
    if p.size == 0:
        return np.zeros(0, dtype=int)
    if np.any((p < 0) | (p > 1)):
        raise ValidationError("posterior null probabilities must lie in [0, 1]")
    order = np.argsort(p, kind="stable")
    running = np.cumsum(p[order]) / np.arange(1, p.size + 1)
    ok = np.flatnonzero(running <= alpha)
    if ok.size == 0:
        return np.zeros(0, dtype=int)
    return np.sort(order[: ok[-1] + 1])


def bh_reject(pvalues: Sequence[float], alpha: float) -> np.ndarray:
    """Benjamini–Hochberg step-up: reject the j smallest p-values for the largest j with p_(j) <= j alpha / n."""
    p = np.asarray(pvalues, dtype=float)
    n = p.size
    if n == 0:
        return np.zeros(0, dtype=int)
    if np.any((p < 0) | (p > 1)):
        raise ValidationError("p-values must lie in [0, 1]")
    order = np.argsort(p, kind="stable")
    ok = np.flatnonzero(p[order] <= alpha * np.arange(1, n + 1) / n)
    if ok.size == 0:
        return np.zeros(0, dtype=int)
    return np.sort(order[: ok[-1] + 1])


def t_cdf(t, k):
    """Student-t CDF through the regularized incomplete beta function."""
    t = np.asarray(t, dtype=float)
    k = np.asarray(k, dtype=float)
    if np.any(~(k > 0)):
        raise ValidationError("degrees of freedom must be > 0")
    tail = 0.5 * special.betainc(k / 2, 0.5, k / (k + t * t))
    out = np.where(t >= 0, 1.0 - tail, tail)
    return float(out) if out.ndim == 0 else out


def ttest_pvalues(x, s2, k, delta: float) -> np.ndarray:
    """2 (1 - F_{t_k}((|x| - delta) / s)), clamped at 1 inside the null region."""
    x, s2, k = (np.asarray(a, dtype=float) for a in (x, s2, k))
    stat = (np.abs(x) - delta) / np.sqrt(s2)
    return np.clip(2 * (1 - t_cdf(stat, k)), 0.0, 1.0)


def ttest_pvalue(obs: Observation, delta: float) -> float:
    return float(ttest_pvalues(obs.x, obs.s2, obs.k, delta))
