"""Normal–Inverse-Gamma conjugate model with closed-form marginal and posterior.

Prior: theta | sigma2 ~ N(mu0, sigma2 / kappa0), 1/sigma2 ~ Gamma(a0, rate b0).
Data:  x | theta, sigma2 ~ N(theta, sigma2), s2 | sigma2 ~ sigma2 chi2_k / k.

Integrating out (theta, 1/sigma2) gives, with
b_n = b0 + k s2 / 2 + kappa0 (x - mu0)^2 / (2 (kappa0 + 1)) and a_n = a0 + (k + 1) / 2,

    f(x, s2) = c * s2^(k/2 - 1) * Gamma(a_n) / b_n^a_n.

The posterior is 1/sigma2 | D ~ Gamma(a_n, b_n) and
theta | sigma2, D ~ N(m, sigma2 / (kappa0 + 1)) with m = (kappa0 mu0 + x) / (kappa0 + 1),
so theta | D is a Student t with 2 a_n degrees of freedom. Every posterior
quantity the engine estimates has a closed form here, which makes this model
the ground truth for the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special, stats


@dataclass(frozen=True)
class NormalInverseGamma:
    mu0: float = 0.0
    kappa0: float = 1.0
    a0: float = 6.0
    b0: float = 5.0
    k: float = 10.0

    @property
    def a_n(self) -> float:
        return self.a0 + (self.k + 1) / 2

    def b_n(self, x, s2):
        x = np.asarray(x, dtype=float)
        s2 = np.asarray(s2, dtype=float)
        return self.b0 + self.k * s2 / 2 + self.kappa0 * (x - self.mu0) ** 2 / (2 * (self.kappa0 + 1))

    def post_mean_theta(self, x):
        return (self.kappa0 * self.mu0 + np.asarray(x, dtype=float)) / (self.kappa0 + 1)

    # marginal density and its exact partials

    def _log_const(self) -> float:
        k = self.k
        return (
            0.5 * math.log(self.kappa0 / (2 * math.pi * (self.kappa0 + 1)))
            + (k / 2) * math.log(k / 2)
            - special.gammaln(k / 2)
            + self.a0 * math.log(self.b0)
            - special.gammaln(self.a0)
            + special.gammaln(self.a_n)
        )

    def logpdf(self, x, s2, k=None):
        x, s2 = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(s2, dtype=float))
        return self._log_const() + (self.k / 2 - 1) * np.log(s2) - self.a_n * np.log(self.b_n(x, s2))

    def pdf(self, x, s2, k=None):
        return np.exp(self.logpdf(x, s2, k))

    def partials(self, x, s2):
        """(f, df/dx, df/ds2), analytic."""
        f = self.pdf(x, s2)
        bn = self.b_n(x, s2)
        fx = f * (-self.a_n / bn) * self.kappa0 * (np.asarray(x) - self.mu0) / (self.kappa0 + 1)
        fs2 = f * ((self.k / 2 - 1) / np.asarray(s2) - self.a_n * self.k / (2 * bn))
        return f, fx, fs2

    # posterior quantities

    def mgf_uv(self, x, s2, t1, t2):
        """E exp(t1 theta / sigma2 + t2 / sigma2 | x, s2)."""
        bn = self.b_n(x, s2)
        m = self.post_mean_theta(x)
        arg = t1 * m + t1**2 / (2 * (self.kappa0 + 1)) + t2
        return (1 - arg / bn) ** (-self.a_n)

    def mgf_u(self, x, s2, t):
        return self.mgf_uv(x, s2, t, 0.0)

    def mgf_v(self, x, s2, t):
        return self.mgf_uv(x, s2, 0.0, t)

    def mgf_w(self, x, s2, z, t):
        return self.mgf_uv(x, s2, t, -z * t)

    def w_moments(self, x, s2, z):
        """Mean and variance of U - z V."""
        bn = self.b_n(x, s2)
        an = self.a_n
        m = self.post_mean_theta(x)
        mean = (m - z) * an / bn
        var = (m - z) ** 2 * an / bn**2 + an / (bn * (self.kappa0 + 1))
        return mean, var

    def posterior_theta(self, x, s2):
        """Frozen scipy Student-t law of theta | x, s2."""
        scale = np.sqrt(self.b_n(x, s2) / (self.a_n * (self.kappa0 + 1)))
        return stats.t(df=2 * self.a_n, loc=self.post_mean_theta(x), scale=scale)

    def posterior_cdf(self, x, s2, z):
        return self.posterior_theta(x, s2).cdf(z)

    # simulation

    def draw(self, n: int, rng: np.random.Generator):
        """(theta, sigma2, x, s2) drawn from the generative model."""
        tau = rng.gamma(self.a0, 1.0 / self.b0, size=n)
        sigma2 = 1.0 / tau
        theta = rng.normal(self.mu0, np.sqrt(sigma2 / self.kappa0))
        x = rng.normal(theta, np.sqrt(sigma2))
        s2 = sigma2 * rng.gamma(self.k / 2, 2.0, size=n) / self.k
        return theta, sigma2, x, s2
