"""Nonparametric empirical Bayes for normal means with unequal, unknown variances.

Observations are ``(x_i, s2_i, k_i)`` with x_i ~ N(theta_i, sigma2_i) and
s2_i ~ sigma2_i chi2_k / k. The joint marginal density of (x, s2) is estimated
by a kernel density estimate; shrinkage estimates, posterior CDFs, intervals
and interval-null tests are all computed from that density alone.
"""

from .conjugate import NormalInverseGamma
from .core import Dataset, EngineConfig, Observation, load_config, read_dataset, validate_dataset
from .density import ConditionalDensityModel, MarginalDensityModel, eval_f, eval_partials, fit, fit_auto, fit_conditional
from .errors import (
    ConfigError,
    ConvergenceError,
    DegreesOfFreedomError,
    DomainError,
    DuplicateIdError,
    EbnfError,
    NumericalError,
    SupportError,
    ValidationError,
)
from .mgf import MgfEvaluator
from .posterior import PosteriorCdf, cdf_at, maxent_solve, posterior_for, quantile_interval
from .shrinkage import bayes_estimate, ebt_estimate, ebt_estimates, regret_diagnostic, weighted_loss
from .simulate import ScenarioSpec, draw_scenario, run_estimation_study, run_interval_study, run_testing_study
from .testing import bh_reject, fdr_reject, posterior_null_prob, t_cdf, ttest_pvalue

__version__ = "0.1.0"
