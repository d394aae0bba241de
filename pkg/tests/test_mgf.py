import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ebnf.core import Observation
from ebnf.density import fit
from ebnf.errors import DegreesOfFreedomError, DomainError
from ebnf.mgf import MgfEvaluator, log_mgf_w, reference_w_variance, shifted_variance, w_moments, w_t_limits

obs_st = st.builds(
    Observation,
    id=st.just("u"),
    x=st.floats(-5, 5),
    s2=st.floats(0.05, 10),
    k=st.sampled_from([3.0, 5.0, 10.0, 20.0]),
)


@given(obs_st, st.floats(-10, 10))
def test_mgf_at_zero_is_one(nig, obs, z):
    # M(0) = 1 exactly for both the oracle and a fitted kernel estimate
    ev = MgfEvaluator(obs, nig)
    assert abs(ev.mgf_uv(0.0, 0.0) - 1.0) <= 1e-12
    assert abs(ev.mgf_w(z, 0.0) - 1.0) <= 1e-12


def test_mgf_at_zero_kde(s1_sample):
    model = fit(s1_sample.dataset)
    for o in s1_sample.dataset.observations[:20]:
        ev = MgfEvaluator(o, model)
        assert abs(ev.mgf_uv(0.0, 0.0) - 1.0) <= 1e-12


def _valid_pairs(obs, rng, n):
    out = []
    while len(out) < n:
        t1, t2 = rng.uniform(-0.5, 0.5, 2)
        if shifted_variance(obs.x, obs.s2, obs.k, t1, t2) > 0.05 * obs.s2:
            out.append((t1, t2))
    return out


def test_identity_matches_conjugate_posterior(nig, rng):
    for x, s2 in [(0.3, 1.2), (-2.0, 0.6), (1.5, 2.5)]:
        obs = Observation("u", x, s2, nig.k)
        ev = MgfEvaluator(obs, nig)
        for t1, t2 in _valid_pairs(obs, rng, 20):
            assert ev.mgf_uv(t1, t2) == pytest.approx(nig.mgf_uv(x, s2, t1, t2), rel=1e-10)
        assert ev.mgf_u(0.2) == pytest.approx(nig.mgf_u(x, s2, 0.2), rel=1e-10)
        assert ev.mgf_v(-0.3) == pytest.approx(nig.mgf_v(x, s2, -0.3), rel=1e-10)
        assert ev.mgf_w(0.5, 0.1) == pytest.approx(nig.mgf_w(x, s2, 0.5, 0.1), rel=1e-10)


@given(obs_st, st.floats(-20, 20))
def test_w_limits_are_roots(obs, z):
    neg, pos = w_t_limits(obs.x, obs.s2, obs.k, z)
    assert neg > 0 and pos > 0
    d = obs.x - z
    scale = d * d + obs.k * obs.s2
    for t in (pos, -neg):
        assert abs(t * t + 2 * t * d - obs.k * obs.s2) <= 1e-9 * scale
    assert shifted_variance(obs.x, obs.s2, obs.k, 0.99 * pos, -z * 0.99 * pos) > 0


def test_domain_error_reports_limit(nig):
    obs = Observation("u", 1.0, 0.5, 10.0)
    ev = MgfEvaluator(obs, nig)
    neg, pos = ev.w_limits(0.0)
    with pytest.raises(DomainError) as info:
        ev.mgf_w(0.0, 1.01 * pos)
    assert info.value.max_abs_t == pytest.approx(pos)
    assert info.value.ids == ("u",)
    with pytest.raises(DomainError):
        ev.mgf_uv(0.0, obs.k * obs.s2)
    with pytest.raises(DegreesOfFreedomError):
        MgfEvaluator(Observation("u", 0.0, 1.0, 0.0), nig)


def test_w_moments_match_conjugate(nig):
    x = np.array([0.3, -1.0, 2.0])
    s2 = np.array([1.0, 0.5, 2.0])
    for z in (-1.0, 0.0, 0.8):
        lf = nig.logpdf(x, s2)
        m = w_moments(nig, x, s2, np.full(3, nig.k), lf, lf, np.full(3, z))
        em, ev = nig.w_moments(x, s2, z)
        np.testing.assert_allclose(m.mean, em, rtol=1e-6)
        np.testing.assert_allclose(m.var, ev, rtol=1e-4)
        assert not m.floored.any()


def test_log_mgf_is_row_independent(s1_sample, rng):
    model = fit(s1_sample.dataset)
    d = s1_sample.dataset
    lf = model.logpdf(d.x, d.s2)
    t = np.full((d.x.size, 1), 0.05)
    whole = log_mgf_w(model, d.x[:, None], d.s2[:, None], d.k[:, None], lf[:, None], np.zeros((d.x.size, 1)), t)
    part = log_mgf_w(model, d.x[:5, None], d.s2[:5, None], d.k[:5, None], lf[:5, None], np.zeros((5, 1)), t[:5])
    assert np.array_equal(whole[:5], part)


def test_reference_variance():
    # theta ~ N(x, s2) and V ~ Gamma(k/2, rate k s2/2): Var(U - zV) by Monte Carlo
    rng = np.random.default_rng(3)
    x, s2, k, z = 0.7, 1.3, 10.0, -0.4
    v = rng.gamma(k / 2, 2 / (k * s2), 400_000)
    theta = rng.normal(x, np.sqrt(s2), v.size)
    w = (theta - z) * v
    assert reference_w_variance(x, s2, k, z) == pytest.approx(w.var(), rel=0.02)
