import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from ebnf.core import Observation
from ebnf.errors import ValidationError
from ebnf.posterior import PosteriorCdf
from ebnf.testing import (
    Method,
    TestResult,
    bh_reject,
    fdr_reject,
    posterior_null_prob,
    posterior_null_probs,
    t_cdf,
    ttest_pvalue,
    ttest_pvalues,
)


def brute_fdr(p, alpha):
    # largest threshold set {i : p_i <= c} whose mean null probability is <= alpha
    best = set()
    for c in p:
        s = {i for i, v in enumerate(p) if v <= c}
        if np.mean([p[i] for i in s]) <= alpha and len(s) > len(best):
            best = s
    return sorted(best)


def brute_bh(p, alpha):
    n = len(p)
    best = set()
    for c in p:
        s = {i for i, v in enumerate(p) if v <= c}
        if c <= alpha * len(s) / n and len(s) > len(best):
            best = s
    return sorted(best)


def test_rules_match_brute_force_on_1000_inputs():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        n = int(rng.integers(1, 30))
        p = rng.beta(0.5, 1.0, n) if rng.random() < 0.5 else rng.random(n)
        alpha = float(rng.uniform(0.01, 0.5))
        assert fdr_reject(p, alpha).tolist() == brute_fdr(list(p), alpha)
        assert bh_reject(p, alpha).tolist() == brute_bh(list(p), alpha)


def test_small_examples():
    assert fdr_reject([0.01, 0.5, 0.02, 0.2], 0.1).tolist() == [0, 2, 3]
    assert bh_reject([0.01, 0.5, 0.02, 0.04], 0.05).tolist() == [0, 2]
    assert bh_reject([0.01, 0.5, 0.02, 0.035], 0.05).tolist() == [0, 2, 3]
    assert fdr_reject([], 0.1).size == 0 and bh_reject([], 0.1).size == 0
    assert fdr_reject([0.9], 0.1).size == 0
    with pytest.raises(ValidationError):
        fdr_reject([1.2], 0.1)
    with pytest.raises(ValidationError):
        bh_reject([-0.1], 0.1)


probs = st.lists(st.floats(0, 1), min_size=1, max_size=40)


@given(probs, st.floats(0.001, 0.5), st.floats(0.0, 0.5))
def test_monotone_in_alpha(p, a1, extra):
    a2 = a1 + extra
    assert set(fdr_reject(p, a1)) <= set(fdr_reject(p, a2))
    assert set(bh_reject(p, a1)) <= set(bh_reject(p, a2))


@given(st.lists(st.floats(0, 1), min_size=1, max_size=40, unique=True), st.floats(0.01, 0.5), st.randoms())
def test_permutation_equivariance(p, alpha, r):
    perm = list(range(len(p)))
    r.shuffle(perm)
    q = [p[i] for i in perm]
    for rule in (fdr_reject, bh_reject):
        back = sorted(perm[i] for i in rule(q, alpha))
        assert back == rule(p, alpha).tolist()


def _t_cdf_quad(t, k):
    logc = math.lgamma((k + 1) / 2) - math.lgamma(k / 2) - 0.5 * math.log(k * math.pi)
    dens = lambda u: math.exp(logc - (k + 1) / 2 * math.log1p(u * u / k))
    val, _ = integrate.quad(dens, 0.0, abs(t), epsabs=1e-13)
    return 0.5 + math.copysign(val, t)


def test_t_cdf_closed_forms_and_quadrature():
    assert t_cdf(0.0, 7) == 0.5
    assert t_cdf(1.0, 1) == pytest.approx(0.75, abs=1e-15)  # Cauchy
    for t in (-3.0, 0.4, 2.5):
        assert t_cdf(t, 2) == pytest.approx(0.5 + t / (2 * math.sqrt(2 + t * t)), abs=1e-14)
    assert t_cdf(2.228138851986273, 10) == pytest.approx(0.975, abs=1e-12)
    for t in (-4.0, -1.3, 0.2, 1.7, 6.0):
        for k in (3, 10, 25.5):
            assert t_cdf(t, k) == pytest.approx(_t_cdf_quad(t, k), abs=1e-10)
    np.testing.assert_allclose(t_cdf(np.array([-1.0, 1.0]), 5), [1 - t_cdf(1.0, 5), t_cdf(1.0, 5)])
    with pytest.raises(ValidationError):
        t_cdf(1.0, 0)


def test_ttest_pvalues():
    p = ttest_pvalues([0.5, 3.0, -3.0], [1.0, 1.0, 1.0], 10, 1.0)
    assert p[0] == 1.0  # |x| inside the null interval saturates at 1
    assert p[1] == p[2] == pytest.approx(2 * (1 - t_cdf(2.0, 10)))
    assert ttest_pvalue(Observation("u", 3.0, 1.0, 10), 1.0) == pytest.approx(p[1])


def test_posterior_null_prob_conjugate(nig):
    x = np.array([0.0, 1.5, -3.0])
    s2 = np.array([1.0, 0.5, 2.0])
    pc = PosteriorCdf(nig, x, s2, nig.k)
    pn = posterior_null_probs(pc, 1.0)
    law = nig.posterior_theta(x, s2)
    np.testing.assert_allclose(pn, law.cdf(1.0) - law.cdf(-1.0), atol=0.02)
    assert posterior_null_prob(PosteriorCdf(nig, [0.0], [1.0], nig.k), 0.0) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValidationError):
        posterior_null_probs(pc, -1.0)


def test_result_record():
    r = TestResult("u", 0.1, 0.2, True, Method.NF)
    assert r.method.value == "NF"
