import math

import numpy as np
import pytest
from scipy import integrate

from crdesign.model import (
    HIGH, LOW, RE, SE, STANDARD, InvalidArmError, ModelParams, PatientRecord, PriorConfig,
    hazard, log_hazard_ratio, log_likelihood, log_posterior, log_prior, survival,
)
from oracles import loglik_scalar, logprior_scalar

THETA = ModelParams(alpha=(1.3, 0.8), beta=(0.7, 1.9), gamma=((0.4, -0.2, 0.9), (-1.1, 0.3, -0.5)))


def test_log_hazard_ratio_cases():
    g1, g2 = THETA.gamma
    assert log_hazard_ratio(1, SE, LOW, THETA) == 0.0
    assert log_hazard_ratio(1, SE, STANDARD, THETA) == g1[0]
    assert log_hazard_ratio(1, RE, STANDARD, THETA) == g1[1]
    assert log_hazard_ratio(2, RE, HIGH, THETA) == g2[2]


@pytest.mark.parametrize("w,d", [(RE, LOW), (SE, HIGH), (2, 1)])
def test_invalid_arms_rejected(w, d):
    with pytest.raises(InvalidArmError):
        log_hazard_ratio(1, w, d, THETA)


def test_hazard_is_weibull_closed_form():
    x = 0.37
    expect = 1.3 * 0.7 * x ** 0.3 * math.exp(-0.2)
    assert hazard(1, x, RE, STANDARD, THETA) == pytest.approx(expect, rel=1e-14)


def test_exponential_special_case():
    th = ModelParams(alpha=(1.0, 1.0), beta=(0.5, 2.0))
    assert hazard(2, 0.3, SE, LOW, th) == pytest.approx(2.0)
    assert survival(1, 2.0, SE, LOW, th) == pytest.approx(math.exp(-1.0))


def test_survival_matches_integrated_hazard():
    rng = np.random.default_rng(0)
    for _ in range(30):
        th = ModelParams(alpha=tuple(rng.uniform(0.3, 3, 2)), beta=tuple(rng.uniform(0.1, 3, 2)),
                         gamma=(tuple(rng.normal(0, 1, 3)), tuple(rng.normal(0, 1, 3))))
        for w, d in ((RE, HIGH), (SE, STANDARD)):
            for k in (1, 2):
                x = rng.uniform(0.05, 2.0)
                integral, _ = integrate.quad(lambda t: hazard(k, t, w, d, th), 0, x, epsrel=1e-13, limit=200)
                assert survival(k, x, w, d, th) == pytest.approx(math.exp(-integral), rel=1e-8)


def test_hazard_requires_positive_time():
    with pytest.raises(ValueError):
        hazard(1, 0.0, RE, STANDARD, THETA)


def test_record_validation():
    with pytest.raises(ValueError):
        PatientRecord(RE, STANDARD, 0.5, 1, 1)
    with pytest.raises(ValueError):
        PatientRecord(RE, STANDARD, 0.0)
    with pytest.raises(InvalidArmError):
        PatientRecord(RE, LOW, 0.5)


def test_loglik_single_event_record():
    rec = PatientRecord(SE, STANDARD, 0.5, 1, 0)
    a1, a2 = THETA.alpha
    b1, b2 = THETA.beta
    h1, h2 = THETA.gamma[0][0], THETA.gamma[1][0]
    expect = (math.log(a1 * b1 * 0.5 ** (a1 - 1) * math.exp(h1))
              - b1 * math.exp(h1) * 0.5 ** a1 - b2 * math.exp(h2) * 0.5 ** a2)
    assert log_likelihood([rec], THETA) == pytest.approx(expect, rel=1e-13)


def test_loglik_empty_and_censored():
    assert log_likelihood([], THETA) == 0.0
    rec = PatientRecord(RE, HIGH, 0.8)
    assert log_likelihood([rec], THETA) == pytest.approx(
        math.log(survival(1, 0.8, RE, HIGH, THETA) * survival(2, 0.8, RE, HIGH, THETA)), rel=1e-13)


def test_loglik_against_scalar_oracle():
    rng = np.random.default_rng(1)
    recs = []
    for _ in range(40):
        w = int(rng.integers(2))
        d = (STANDARD, HIGH)[rng.integers(2)] if w == RE else (LOW, STANDARD)[rng.integers(2)]
        e = int(rng.integers(3))
        recs.append(PatientRecord(w, d, float(rng.uniform(0.01, 1)), int(e == 1), int(e == 2)))
    assert log_likelihood(recs, THETA) == pytest.approx(loglik_scalar(recs, THETA.as_array()), rel=1e-12)


def test_prior_is_shape_scale_gamma():
    # Gamma(shape=2, scale=3) has mean 6; density at v is v e^{-v/3} / 9.
    prior = PriorConfig(a=2.0, b=3.0, c=1.0)
    th = ModelParams(alpha=(6.0, 1.0), beta=(1.0, 1.0))
    base = ModelParams(alpha=(1.0, 1.0), beta=(1.0, 1.0))
    diff = log_prior(th, prior) - log_prior(base, prior)
    assert diff == pytest.approx(math.log(6 * math.exp(-2) / (1 * math.exp(-1 / 3))), rel=1e-13)
    assert log_prior(THETA, prior) == pytest.approx(logprior_scalar(THETA.as_array(), 2.0, 3.0, 1.0), rel=1e-13)


def test_prior_support():
    bad = ModelParams(alpha=(0.0, 1.0))
    assert log_prior(bad, PriorConfig()) == -math.inf
    assert log_posterior([PatientRecord(RE, HIGH, 0.5)], bad, PriorConfig()) == -math.inf


def test_posterior_is_sum_of_terms():
    recs = [PatientRecord(SE, LOW, 0.3, 0, 1), PatientRecord(RE, STANDARD, 1.0)]
    prior = PriorConfig()
    expect = loglik_scalar(recs, THETA.as_array()) + logprior_scalar(THETA.as_array(), 1.0, 1.0, 10.0)
    assert log_posterior(recs, THETA, prior) == pytest.approx(expect, rel=1e-12)
    assert log_posterior([], THETA, prior) == log_prior(THETA, prior)


def test_prior_config_validation():
    with pytest.raises(ValueError):
        PriorConfig(a=0.0)


def test_params_round_trip():
    assert ModelParams.from_array(THETA.as_array()) == THETA
    with pytest.raises(ValueError):
        ModelParams.from_array([1.0] * 9)
