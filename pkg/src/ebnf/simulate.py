"""Data-generating scenarios S1-S3 and the Monte-Carlo studies built on them.

Randomness comes from numpy's PCG64 bit generator. Replication ``r`` of a
study seeded with ``seed`` uses the stream seeded by splitmix64(seed ^ r), so
reps can run in any order or process and still reproduce bit for bit.

Scenarios (z_i a Bernoulli mixture indicator, Ga(shape, rate)):

* S1: theta | z ~ z N(-1, 0.7^2) + (1 - z) N(-1 + eta/2, 0.7^2),
  sigma2 = max(0.2, sigma2*) with sigma2* | z ~ z Ga(1, 1) + (1 - z) Ga(1 + eta/3, 1),
  P(z = 1) = 0.3.
* S2: theta | z ~ z * 0 + (1 - z) U(eta/3, 2 + eta/3),
  sigma2 | z ~ z U(0.2, 0.5) + (1 - z) U(3, 7), P(z = 1) = 0.4.
* S3: theta ~ 0.5 N(0, 0.5^2) + 0.5 Ga(2 + eta/3, 2),
  log sigma2 | theta ~ N(theta / 2, 0.2^2).

In every scenario x ~ N(theta, sigma2) and s2 ~ sigma2 chi2_k / k.
"""

from __future__ import annotations

import dataclasses
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import stats

from .conjugate import NormalInverseGamma
from .core import Dataset, EngineConfig, write_csv
from .density import fit
from .errors import ValidationError
from .posterior import PosteriorCdf
from .shrinkage import ebt_estimates, weighted_loss
from .testing import bh_reject, fdr_reject, posterior_null_probs, ttest_pvalues

SCENARIOS = ("S1", "S2", "S3")
METRICS = ("weighted_loss", "cp", "al", "fdr", "tpr", "f1")
_MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def rep_seed(seed: int, rep: int) -> int:
    return splitmix64((seed ^ rep) & _MASK64)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


# samplers

def sample_normal(rng: np.random.Generator, mean=0.0, sd=1.0, size=None):
    if np.any(np.asarray(sd) < 0):
        raise ValidationError("normal sd must be >= 0")
    return rng.normal(mean, sd, size)


def sample_gamma(rng: np.random.Generator, shape, scale=1.0, size=None):
    if np.any(~(np.asarray(shape) > 0)) or np.any(~(np.asarray(scale) > 0)):
        raise ValidationError("gamma shape and scale must be > 0")
    return rng.gamma(shape, scale, size)


def sample_chisq(rng: np.random.Generator, df, size=None):
    return sample_gamma(rng, np.asarray(df, dtype=float) / 2, 2.0, size)


def sample_uniform(rng: np.random.Generator, low=0.0, high=1.0, size=None):
    if np.any(np.asarray(high) < np.asarray(low)):
        raise ValidationError("uniform requires low <= high")
    return rng.uniform(low, high, size)


# scenarios

@dataclass(frozen=True)
class ScenarioSpec:
    scenario: str = "S1"
    eta: float = 4.0
    n: int = 500
    k: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValidationError(f"unknown scenario {self.scenario!r}; expected one of {SCENARIOS}")
        if not self.eta >= 0:
            raise ValidationError("eta must be >= 0")
        if self.n < 10:
            raise ValidationError("n must be >= 10")
        if not self.k > 2:
            raise ValidationError("k must exceed 2")
        if not 0 <= self.seed <= _MASK64:
            raise ValidationError("seed must be a 64-bit unsigned integer")

    def for_rep(self, rep: int) -> "ScenarioSpec":
        return dataclasses.replace(self, seed=rep_seed(self.seed, rep))


@dataclass(frozen=True, eq=False)
class TruthedSample:
    dataset: Dataset
    theta: np.ndarray
    sigma2: np.ndarray


def _draw_truth(spec: ScenarioSpec, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    n, eta = spec.n, spec.eta
    if spec.scenario == "S1":
        z = sample_uniform(rng, size=n) < 0.3
        theta = sample_normal(rng, np.where(z, -1.0, -1.0 + eta / 2), 0.7)
        raw = sample_gamma(rng, np.where(z, 1.0, 1.0 + eta / 3), 1.0)
        return theta, np.maximum(0.2, raw)
    if spec.scenario == "S2":
        z = sample_uniform(rng, size=n) < 0.4
        theta = np.where(z, 0.0, sample_uniform(rng, eta / 3, 2 + eta / 3, n))
        sigma2 = np.where(z, sample_uniform(rng, 0.2, 0.5, n), sample_uniform(rng, 3.0, 7.0, n))
        return theta, sigma2
    z = sample_uniform(rng, size=n) < 0.5
    theta = np.where(z, sample_normal(rng, 0.0, 0.5, n), sample_gamma(rng, 2 + eta / 3, 0.5, n))
    sigma2 = np.exp(sample_normal(rng, theta / 2, 0.2))
    return theta, sigma2


def observe(theta, sigma2, k: float, rng: np.random.Generator) -> Dataset:
    """x ~ N(theta, sigma2), s2 ~ sigma2 chi2_k / k."""
    x = sample_normal(rng, theta, np.sqrt(sigma2))
    s2 = sigma2 * sample_chisq(rng, k, np.shape(theta)) / k
    return Dataset.from_arrays(x, s2, k)


def draw_scenario(spec: ScenarioSpec) -> TruthedSample:
    rng = make_rng(spec.seed)
    theta, sigma2 = _draw_truth(spec, rng)
    return TruthedSample(observe(theta, sigma2, spec.k, rng), theta, sigma2)


def draw_conjugate(prior: NormalInverseGamma, n: int, seed: int) -> TruthedSample:
    theta, sigma2, x, s2 = prior.draw(n, make_rng(seed))
    return TruthedSample(Dataset.from_arrays(x, s2, prior.k), theta, sigma2)


# comparators: each maps (sample, cfg, ...) to estimates; register more by name

def ml_estimates(sample: TruthedSample, cfg: EngineConfig) -> np.ndarray:
    return sample.dataset.x


def nf_estimates(sample: TruthedSample, cfg: EngineConfig) -> np.ndarray:
    model = fit(sample.dataset, cfg)
    return np.array([r.theta_hat for r in ebt_estimates(model, sample.dataset, cfg)])


def ml_intervals(sample: TruthedSample, cfg: EngineConfig, alpha: float):
    d = sample.dataset
    half = stats.t.ppf(1 - alpha / 2, d.k) * np.sqrt(d.s2)
    return d.x - half, d.x + half


def nf_intervals(sample: TruthedSample, cfg: EngineConfig, alpha: float):
    d = sample.dataset
    pc = PosteriorCdf(fit(d, cfg), d.x, d.s2, d.k, cfg, d.ids)
    return pc.interval(alpha)


def _pvalues(sample, delta):
    d = sample.dataset
    return ttest_pvalues(d.x, d.s2, d.k, delta)


def nf_rejections(sample: TruthedSample, cfg: EngineConfig, alpha: float, delta: float) -> np.ndarray:
    d = sample.dataset
    pc = PosteriorCdf(fit(d, cfg), d.x, d.s2, d.k, cfg, d.ids)
    return fdr_reject(posterior_null_probs(pc, delta), alpha)


def ttest_rejections(sample: TruthedSample, cfg: EngineConfig, alpha: float, delta: float) -> np.ndarray:
    # p-values fed through the same step-up used for posterior null probabilities
    return fdr_reject(_pvalues(sample, delta), alpha)


def bh_rejections(sample: TruthedSample, cfg: EngineConfig, alpha: float, delta: float) -> np.ndarray:
    return bh_reject(_pvalues(sample, delta), alpha)


ESTIMATORS: dict[str, Callable] = {"ML": ml_estimates, "NF": nf_estimates}
INTERVALS: dict[str, Callable] = {"ML": ml_intervals, "NF": nf_intervals}
TESTS: dict[str, Callable] = {"NF": nf_rejections, "TTEST": ttest_rejections, "BH": bh_rejections}


# metrics

@dataclass(frozen=True)
class MetricsReport:
    weighted_loss: float = math.nan
    cp: float = math.nan
    al: float = math.nan
    fdr: float = math.nan
    tpr: float = math.nan
    f1: float = math.nan
    reps: int = 0

    def values(self) -> dict[str, float]:
        return {m: getattr(self, m) for m in METRICS if not math.isnan(getattr(self, m))}


def testing_metrics(rejected: np.ndarray, nonnull: np.ndarray) -> tuple[float, float, float]:
    """(FDR, TPR, F1) of one rejection set; 0/0 ratios count as 0."""
    r = np.zeros(nonnull.size, dtype=bool)
    r[np.asarray(rejected, dtype=int)] = True
    tp = int(np.sum(r & nonnull))
    fp = int(np.sum(r & ~nonnull))
    fn = int(np.sum(~r & nonnull))
    fdr = fp / max(1, tp + fp)
    tpr = tp / max(1, tp + fn)
    f1 = 2 * tp / (2 * tp + fp + fn) if tp + fp + fn else 0.0
    return fdr, tpr, f1


def _estimation_rep(spec, rep, cfg, methods):
    sample = draw_scenario(spec.for_rep(rep))
    return {m: {"weighted_loss": weighted_loss(ESTIMATORS[m](sample, cfg), sample.theta, sample.sigma2)} for m in methods}


def _interval_rep(spec, rep, cfg, methods, alpha):
    sample = draw_scenario(spec.for_rep(rep))
    out = {}
    for m in methods:
        lo, hi = INTERVALS[m](sample, cfg, alpha)
        out[m] = {
            "cp": float(np.mean((lo <= sample.theta) & (sample.theta <= hi))),
            "al": float(np.mean(hi - lo)),
        }
    return out


def _testing_rep(spec, rep, cfg, methods, alpha, delta):
    sample = draw_scenario(spec.for_rep(rep))
    nonnull = np.abs(sample.theta) > delta
    out = {}
    for m in methods:
        fdr, tpr, f1 = testing_metrics(TESTS[m](sample, cfg, alpha, delta), nonnull)
        out[m] = {"fdr": fdr, "tpr": tpr, "f1": f1}
    return out


def _run(fn, spec, reps, workers, *args) -> dict[str, MetricsReport]:
    if reps < 1:
        raise ValidationError("reps must be >= 1")
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            per_rep = list(pool.map(fn, *zip(*[(spec, r, *args) for r in range(reps)])))
    else:
        per_rep = [fn(spec, r, *args) for r in range(reps)]
    # reps merge in index order, so worker count cannot change the result
    reports = {}
    for m in per_rep[0]:
        means = {key: float(np.mean([res[m][key] for res in per_rep])) for key in per_rep[0][m]}
        reports[m] = MetricsReport(reps=reps, **means)
    return reports


def run_estimation_study(
    spec: ScenarioSpec, reps: int, cfg: EngineConfig | None = None, methods: Sequence[str] = ("ML", "NF"), workers: int = 1
) -> dict[str, MetricsReport]:
    """Weighted loss averaged over reps, per estimator."""
    return _run(_estimation_rep, spec, reps, workers, cfg or EngineConfig(), tuple(methods))


def run_interval_study(
    spec: ScenarioSpec,
    reps: int,
    alpha: float = 0.05,
    cfg: EngineConfig | None = None,
    methods: Sequence[str] = ("ML", "NF"),
    workers: int = 1,
) -> dict[str, MetricsReport]:
    """Coverage probability and average length of level 1 - alpha intervals."""
    return _run(_interval_rep, spec, reps, workers, cfg or EngineConfig(), tuple(methods), alpha)


def run_testing_study(
    spec: ScenarioSpec,
    reps: int,
    alpha: float = 0.1,
    delta: float = 1.0,
    cfg: EngineConfig | None = None,
    methods: Sequence[str] = ("NF", "TTEST", "BH"),
    workers: int = 1,
) -> dict[str, MetricsReport]:
    """FDR, TPR and F1 for the null |theta| <= delta, averaged over reps."""
    return _run(_testing_rep, spec, reps, workers, cfg or EngineConfig(), tuple(methods), alpha, delta)


# output

METRICS_HEADER = ("scenario", "eta", "n", "k", "method", "metric", "value")


def metrics_rows(spec: ScenarioSpec, reports: Mapping[str, MetricsReport]) -> list[tuple]:
    rows = []
    for method, rep in reports.items():
        for metric, value in rep.values().items():
            rows.append((spec.scenario, float(spec.eta), spec.n, spec.k, method, metric, value))
    return rows


def write_metrics(path: str | Path | None, rows: Sequence[tuple]) -> str:
    return write_csv(path, METRICS_HEADER, rows)


def summary_json(spec: ScenarioSpec, reports: Mapping[str, Mapping[str, MetricsReport]]) -> str:
    """JSON summary keyed by study, then method."""
    doc = {
        "schema": "ebnf-metrics v1",
        "spec": dataclasses.asdict(spec),
        "studies": {
            study: {m: {"reps": r.reps, **r.values()} for m, r in by_method.items()}
            for study, by_method in reports.items()
        },
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def eta_sweep(
    spec: ScenarioSpec, etas: Sequence[float], reps: int, cfg: EngineConfig | None = None, workers: int = 1
) -> list[tuple]:
    """Weighted-loss curves over eta: rows (scenario, eta, n, k, method, weighted_loss)."""
    rows = []
    for eta in etas:
        s = dataclasses.replace(spec, eta=float(eta))
        for method, rep in run_estimation_study(s, reps, cfg, workers=workers).items():
            rows.append((s.scenario, float(eta), s.n, s.k, method, rep.weighted_loss))
    return rows


PLOT_HEADER = ("scenario", "eta", "n", "k", "method", "weighted_loss")
