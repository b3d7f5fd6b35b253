import math

import numpy as np
import pytest
from scipy import stats

from infobounds import bounds
from infobounds.bounds import HOLDS, INCONCLUSIVE, VIOLATED, BoundReport, decide
from infobounds.errors import EstimationError, NormalizationError, UnsupportedError
from infobounds.models import (
    make_exponential_prior_model,
    make_flat_likelihood_model,
    make_gaussian_imaging_model,
    make_gaussian_scalar_model,
)

SQRT_2_PI = math.sqrt(2.0 / math.pi)


@pytest.fixture
def scalar():
    return make_gaussian_scalar_model([1.0, 0.0], np.eye(2))


def within(est, expected, k=3.0):
    return abs(est.value - expected) <= k * est.std_error


# --------------------------------------------------------------------------
# verdict logic
# --------------------------------------------------------------------------


def test_decide_rules():
    assert decide(0.1, 0.05, "eq") == HOLDS
    assert decide(0.2, 0.05, "eq") == VIOLATED
    assert decide(-0.2, 0.05, "eq") == VIOLATED
    assert decide(5.0, 0.0, "le") == HOLDS
    assert decide(-0.1, 0.05, "le") == HOLDS
    assert decide(-0.2, 0.05, "le") == VIOLATED
    assert decide(-0.2, 0.05, "le", atol=0.1) == HOLDS
    assert decide(0.0, 0.0, "le", flags=["x"]) == INCONCLUSIVE
    assert decide(math.nan, 0.0, "le") == INCONCLUSIVE
    assert decide(0.0, math.inf, "eq") == INCONCLUSIVE
    with pytest.raises(ValueError):
        decide(0.0, 0.0, "ge")


def test_report_slack_ratio_and_rejudge():
    r = BoundReport("x", 1.0, 0.9, lhs_se=0.03, rhs_se=0.04, relation="le")
    assert r.slack == pytest.approx(-0.1)
    assert r.std_error == pytest.approx(0.05)
    assert r.ratio == pytest.approx(1 / 0.9)
    assert r.verdict == HOLDS
    assert r.rejudge(1.0) == VIOLATED
    rec = r.to_record()
    assert rec["slack_convention"] == "rhs - lhs" and rec["verdict"] == VIOLATED


def test_record_serializes_nonfinite():
    rec = BoundReport("x", math.inf, 1.0).to_record()
    assert rec["lhs"] == "inf" and rec["verdict"] == INCONCLUSIVE


def test_config_hash_stable(scalar):
    a = bounds.config_hash("n", scalar, seed=1, steps=[0.1, 0.05])
    assert a == bounds.config_hash("n", scalar, steps=[0.1, 0.05], seed=1)
    assert a != bounds.config_hash("n", scalar, seed=2, steps=[0.1, 0.05])
    assert len(a) == 16


# --------------------------------------------------------------------------
# EMSE and van Trees
# --------------------------------------------------------------------------


def test_emse_posterior_mean(scalar):
    assert within(bounds.emse(scalar, "posterior_mean", 100_000, seed=1), 0.5)


def test_emse_constant_estimator_is_prior_variance():
    m = make_gaussian_scalar_model([1.0, 0.0], np.eye(2), mu=0.3, sigma2=2.0)
    assert within(bounds.emse(m, "prior_mean", 100_000, seed=2), 2.0)


def test_emse_ml_linear(scalar):
    assert within(bounds.emse(scalar, "ml_linear", 100_000, seed=3), 1.0)


def test_emse_custom_and_exclusions(scalar):
    e = bounds.emse(scalar, lambda g: np.zeros(len(g)), 50_000, seed=4)
    assert within(e, 1.0) and e.estimator == "<lambda>"

    def broken(g):
        out = np.zeros(len(g))
        out[::10] = np.nan
        return out

    with pytest.raises(EstimationError):
        bounds.emse(scalar, broken, 1000, seed=0)


def test_van_trees_equality(scalar):
    r = bounds.van_trees_check(scalar, n_samples=100_000, seed=5)
    assert r.lhs == pytest.approx(0.5)
    assert r.verdict == HOLDS and abs(r.slack) <= 3 * r.std_error


def test_van_trees_ml_linear_gap(scalar):
    r = bounds.van_trees_check(scalar, "ml_linear", n_samples=100_000, seed=6)
    assert r.verdict == HOLDS
    assert abs(r.slack - 0.5) <= 3 * r.std_error


def test_van_trees_flat_likelihood():
    m = make_flat_likelihood_model(0.0, 2.0)
    r = bounds.van_trees_check(m, n_samples=100_000, seed=7)
    assert r.verdict == HOLDS and abs(r.slack) <= 3 * r.std_error


# --------------------------------------------------------------------------
# Ziv-Zakai
# --------------------------------------------------------------------------


def test_ziv_zakai_gaussian_holds_and_is_tight(scalar):
    zz = bounds.ziv_zakai_rhs(scalar)
    assert zz.converged
    assert zz.value == pytest.approx(0.5, rel=1e-4)
    assert bounds.ziv_zakai_check(scalar).verdict == HOLDS


def test_ziv_zakai_ordering_symmetry(scalar):
    a = bounds.ziv_zakai_rhs(scalar).value
    b = bounds.ziv_zakai_rhs(scalar, order="swapped").value
    assert abs(a - b) <= 1e-12


@pytest.mark.parametrize("c", [0.25, 0.5, 1.0, 2.0, 4.0])
def test_ziv_zakai_covariance_scalings(c):
    k = c * np.array([[1.0, 0.3], [0.3, 2.0]])
    m = make_gaussian_scalar_model([0.6, 0.8], k)
    r = bounds.ziv_zakai_check(m)
    assert r.verdict == HOLDS
    assert r.lhs <= r.rhs * (1 + 1e-4)


def test_ziv_zakai_zero_information_against_mc():
    # no data: P_e(theta, theta~) is the smaller of the two prior weights
    m = make_flat_likelihood_model(0.0, 1.0)
    zz = bounds.ziv_zakai_rhs(m).value
    rng = np.random.default_rng(123)
    n = 1_000_000
    theta = rng.normal(size=n)
    delta = rng.uniform(-16, 16, size=n)
    p0, p1 = stats.norm.pdf(theta), stats.norm.pdf(theta + delta)
    vals = 0.5 * 32 * np.minimum(p0, p1) / (p0 + p1) * np.abs(delta)
    oracle, se = vals.mean(), vals.std() / math.sqrt(n)
    assert abs(zz - oracle) <= 3 * se
    # for a flat likelihood the bound reaches the prior variance
    assert zz == pytest.approx(1.0, rel=1e-4)


def test_ziv_zakai_exponential():
    m = make_exponential_prior_model(2.0)
    r = bounds.ziv_zakai_check(m)
    assert r.lhs == pytest.approx(1 / 8, rel=1e-4)
    assert r.rhs == pytest.approx(1 / 4) and r.verdict == HOLDS


def test_ziv_zakai_monte_carlo_backend():
    m = make_gaussian_scalar_model([1.0], [[1.0]])
    zz = bounds.ziv_zakai_rhs(m, n_theta=12, n_delta=12, mpe_backend="monte_carlo", n_mc=4000, seed=1)
    assert abs(zz.value - 0.5) <= 3 * zz.std_error + 1e-3


def test_ziv_zakai_refuses_bad_options(scalar):
    with pytest.raises(ValueError):
        bounds.ziv_zakai_rhs(scalar, mpe_backend="exact")
    with pytest.raises(UnsupportedError):
        bounds.ziv_zakai_rhs(scalar, mpe_backend="monte_carlo", order="swapped")
    with pytest.raises(UnsupportedError):
        bounds.ziv_zakai_rhs(make_gaussian_scalar_model([1.0], [[1.0]], flat_prior=True))


# --------------------------------------------------------------------------
# MPE slope, slope identity, Schwarz
# --------------------------------------------------------------------------


def test_mpe_slope_analytic_value(scalar):
    s = bounds.mpe_slope(scalar, "plus", backend="analytic")
    oracle = -0.25 * math.sqrt(2 / math.pi * 2)
    assert s.extrapolated == pytest.approx(oracle, abs=5e-4)
    assert round(s.extrapolated, 4) == pytest.approx(-0.2821, abs=1e-4)
    assert s.richardson_consistent and not s.flags


def test_mpe_slope_sign_flip(scalar):
    plus = bounds.mpe_slope(scalar, "plus", backend="analytic")
    minus = bounds.mpe_slope(scalar, "minus", backend="analytic")
    assert minus.extrapolated == pytest.approx(-plus.extrapolated, rel=1e-9)


def test_mpe_slope_monte_carlo(scalar):
    s = bounds.mpe_slope(scalar, "plus", n_samples=400_000, seed=8)
    oracle = -0.25 * math.sqrt(2 / math.pi * 2)
    assert abs(s.extrapolated - oracle) <= 3 * s.std_error + s.truncation
    assert s.richardson_consistent


def test_mpe_slope_exponential_sharp():
    m = make_exponential_prior_model(2.0)
    s = bounds.mpe_slope(m, "plus", backend="analytic")
    assert s.extrapolated == pytest.approx(-0.5, rel=2e-3)


def test_mpe_slope_bad_steps(scalar):
    with pytest.raises(ValueError):
        bounds.mpe_slope(scalar, steps=[0.1, 0.2])
    with pytest.raises(ValueError):
        bounds.mpe_slope(scalar, side="up")


def test_slope_identity_gaussian(scalar):
    r = bounds.slope_tv_identity_check(scalar, n_samples=400_000, seed=9)
    assert r.rhs == pytest.approx(math.sqrt(4 / math.pi), abs=1e-9)
    assert r.verdict == HOLDS


def test_slope_identity_flat_likelihood():
    m = make_flat_likelihood_model(0.0, 4.0)
    r = bounds.slope_tv_identity_check(m, n_samples=200_000, seed=10)
    assert r.rhs == pytest.approx(SQRT_2_PI / 2, abs=1e-9)
    assert r.verdict == HOLDS


def test_slope_identity_imaging_direction():
    m = make_gaussian_imaging_model([[1.0, 0.0]], [[1.0]], np.eye(2))
    u = np.array([1.0, 1.0]) / math.sqrt(2)
    r = bounds.slope_tv_identity_check(m, u=u, backend="analytic")
    assert r.rhs == pytest.approx(math.sqrt(2 / math.pi * 1.5), abs=1e-9)
    assert r.verdict == HOLDS


def test_schwarz_gaussian_ratio(scalar):
    r = bounds.schwarz_bound_check(scalar, backend="analytic")
    assert r.verdict == HOLDS
    assert r.ratio == pytest.approx(SQRT_2_PI, abs=0.02)


def test_schwarz_exponential_sharp_and_boundary_side():
    m = make_exponential_prior_model(1.0)
    plus = bounds.schwarz_bound_check(m, "plus", backend="analytic")
    assert plus.verdict == HOLDS
    assert plus.ratio == pytest.approx(1.0, abs=0.02)
    assert plus.details["opposite_side"] == "minus"
    minus = bounds.schwarz_bound_check(m, "minus", backend="analytic")
    assert "boundary_prior" in minus.flags and minus.verdict == INCONCLUSIVE


def test_vector_slope_random_spd():
    rng = np.random.default_rng(20)
    for _ in range(20):
        h = rng.normal(size=(1, 2))
        a = rng.normal(size=(2, 2))
        kt = a @ a.T + 0.3 * np.eye(2)
        m = make_gaussian_imaging_model(h, [[rng.uniform(0.5, 2.0)]], kt)
        u = rng.normal(size=2)
        u /= np.linalg.norm(u)
        r = bounds.vector_slope_check(m, u, backend="analytic")
        assert r.name == "vector_slope" and r.verdict == HOLDS
        assert r.ratio == pytest.approx(SQRT_2_PI, abs=0.02)


def test_vector_slope_uninformative_direction():
    # H sees only e1, so along e2 the slope comes from the prior alone
    m = make_gaussian_imaging_model([[1.0, 0.0]], [[1.0]], np.diag([1.0, 4.0]))
    s = bounds.mpe_slope(m, "plus", u=[0.0, 1.0], backend="analytic")
    assert abs(s.extrapolated) == pytest.approx(0.25 * math.sqrt(2 / math.pi * 0.25), rel=2e-3)


def test_vector_slope_needs_unit_direction():
    m = make_gaussian_imaging_model([[1.0, 0.0]], [[1.0]], np.eye(2))
    with pytest.raises(NormalizationError):
        bounds.vector_slope_check(m, [1.0, 1.0], backend="analytic")


# --------------------------------------------------------------------------
# AUC slope
# --------------------------------------------------------------------------


def test_auc_slope_analytic(scalar):
    r = bounds.auc_fi_slope_check(scalar, 0.0)
    assert r.rhs == pytest.approx(1 / (2 * math.sqrt(math.pi)))
    assert r.verdict == HOLDS and r.details["relative_error"] < 0.02
    minus = bounds.auc_slope(scalar, 0.0, "minus")
    plus = bounds.auc_slope(scalar, 0.0, "plus")
    assert minus.extrapolated == pytest.approx(-plus.extrapolated, rel=1e-12)


def test_auc_slope_monte_carlo(scalar):
    r = bounds.auc_fi_slope_check(scalar, 0.3, backend="monte_carlo", n_samples=100_000, seed=11)
    assert r.verdict == HOLDS


def test_auc_slope_imaging_direction():
    h = np.array([[1.0, 0.5]])
    m = make_gaussian_imaging_model(h, [[0.5]], np.eye(2))
    u = np.array([0.6, 0.8])
    r = bounds.auc_fi_slope_check(m, np.zeros(2), u=u)
    oracle = math.sqrt(float(u @ h.T @ h @ u) / 0.5) / (2 * math.sqrt(math.pi))
    assert r.rhs == pytest.approx(oracle, rel=1e-12)
    assert r.verdict == HOLDS and r.details["relative_error"] < 0.02
