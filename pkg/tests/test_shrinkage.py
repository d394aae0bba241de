import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ebnf.core import Dataset, EngineConfig, Observation
from ebnf.density import fit
from ebnf.errors import DegreesOfFreedomError, ValidationError
from ebnf.shrinkage import bayes_estimate, ebt_estimate, ebt_estimates, regret_diagnostic, tempered_estimates, weighted_loss


@given(st.floats(-6, 6), st.floats(0.05, 8))
def test_oracle_bayes_rule_is_posterior_mean(nig, x, s2):
    f, fx, fs2 = nig.partials(x, s2)
    got = bayes_estimate(float(f), float(fx), float(fs2), Observation("u", x, s2, nig.k))
    assert got == pytest.approx(float(nig.post_mean_theta(x)), abs=1e-9)


def test_bayes_estimate_needs_k_above_two():
    with pytest.raises(DegreesOfFreedomError):
        bayes_estimate(1.0, 0.0, 0.0, Observation("u", 0.0, 1.0, 2.0))


def test_tempered_floor():
    theta, den, floored = tempered_estimates(
        np.array([1e-6, 1.0]), np.array([1e-6, 0.5]), np.array([0.0, 0.0]), np.zeros(2), np.ones(2), np.full(2, 10.0), 1e-3
    )
    assert floored.tolist() == [True, False]
    # floored row: x + k s2 fx / rho
    assert theta[0] == pytest.approx(10 * 1e-6 / 1e-3)
    assert theta[1] == pytest.approx(10 * 0.5 / 8)


def test_tempered_matches_exact_when_dense(nig):
    x = np.linspace(-2, 2, 9)
    s2 = np.full(9, 1.0)
    f, fx, fs2 = nig.partials(x, s2)
    theta, den, floored = tempered_estimates(f, fx, fs2, x, s2, np.full(9, nig.k), 1e-8)
    assert not floored.any()
    np.testing.assert_allclose(theta, nig.post_mean_theta(x), atol=1e-12)


def test_ebt_estimates_shrink_toward_bulk(s1_sample):
    d = s1_sample.dataset
    model = fit(d)
    res = ebt_estimates(model, d)
    assert [r.id for r in res] == list(d.ids)
    theta = np.array([r.theta_hat for r in res])
    assert weighted_loss(theta, s1_sample.theta, s1_sample.sigma2) < weighted_loss(d.x, s1_sample.theta, s1_sample.sigma2)
    one = ebt_estimate(model, d.observations[3])
    assert one.theta_hat == res[3].theta_hat
    with pytest.raises(DegreesOfFreedomError):
        ebt_estimates(model, Dataset.from_arrays([0.0, 1.0], [1.0, 1.0], 2.0))


def test_losses():
    assert weighted_loss([1.0, 2.0], [0.0, 0.0], [1.0, 4.0]) == pytest.approx((1 + 1) / 2)
    assert regret_diagnostic([1.0, 3.0], [0.0, 1.0], [1.0, 2.0]) == pytest.approx((1 + 2) / 2)
    with pytest.raises(ValidationError):
        regret_diagnostic([1.0], [1.0, 2.0], [1.0, 1.0])
    with pytest.raises(ValidationError):
        regret_diagnostic([1.0], [1.0], [0.0])
