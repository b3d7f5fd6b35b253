import math

import numpy as np
import pytest
from scipy import integrate, stats

from infobounds.errors import (
    DataImpossibleError,
    DomainError,
    NormalizationError,
    NotPositiveDefiniteError,
    RankDeficientError,
    ShapeError,
    UnsupportedError,
)
from infobounds.models import (
    Exponential,
    GridDensity,
    MultivariateNormal,
    Normal,
    grid_posterior,
    make_exponential_prior_model,
    make_flat_likelihood_model,
    make_gaussian_imaging_model,
    make_gaussian_location_model,
    make_gaussian_scalar_model,
    posterior_density,
)


@pytest.fixture
def scalar():
    return make_gaussian_scalar_model([1.0, 0.0], np.eye(2))


def test_scalar_model_constants(scalar):
    # sT K^-1 s = 1 for K = I, s = e1; plus 1/sigma2 = 1
    assert scalar.bayes_fi == pytest.approx(2.0, abs=1e-14)
    assert scalar.params.posterior_variance == pytest.approx(0.5, abs=1e-14)


def test_flat_prior_limit():
    m = make_gaussian_scalar_model([1.0, 0.0], 4 * np.eye(2), flat_prior=True)
    assert m.params.bayes_fi == pytest.approx(0.25)
    with pytest.raises(UnsupportedError):
        m.sample_prior(np.random.default_rng(0), 3)


def test_correlated_noise_information():
    k = np.array([[2.0, 0.6], [0.6, 1.0]])
    s = np.array([0.6, 0.8])
    m = make_gaussian_scalar_model(s, k, sigma2=2.0)
    assert m.bayes_fi == pytest.approx(s @ np.linalg.inv(k) @ s + 0.5, rel=1e-12)


def test_non_spd_covariance_names_pivot():
    with pytest.raises(NotPositiveDefiniteError, match="pivot|leading minor"):
        make_gaussian_scalar_model([1.0, 0.0], [[1.0, 2.0], [2.0, 1.0]])


def test_unit_vector_required():
    with pytest.raises(NormalizationError):
        make_gaussian_scalar_model([1.0, 1.0], np.eye(2))


def test_conditional_density_normalized(scalar):
    # pr(g|theta) integrates to one over the plane
    val, _ = integrate.dblquad(lambda y, x: float(scalar.cond_density(np.array([[x, y]]), 0.7)[0]),
                               -9, 10, -9, 9, epsabs=1e-10)
    assert val == pytest.approx(1.0, abs=1e-7)


def test_cond_score_matches_finite_difference(scalar):
    rng = np.random.default_rng(3)
    g = rng.normal(size=(20, 2))
    theta = rng.normal(size=20)
    h = 1e-6
    fd = (scalar.log_cond(g, theta + h) - scalar.log_cond(g, theta - h)) / (2 * h)
    np.testing.assert_allclose(scalar.cond_score(g, theta), fd, rtol=1e-5, atol=1e-8)


def test_log_cond_against_scipy():
    k = np.array([[2.0, 0.3], [0.3, 0.5]])
    s = np.array([0.8, 0.6])
    m = make_gaussian_scalar_model(s, k)
    g = np.array([[0.4, -1.2], [2.0, 0.1]])
    expected = [stats.multivariate_normal(1.3 * s, k).logpdf(row) for row in g]
    np.testing.assert_allclose(m.log_cond(g, np.array([1.3, 1.3])), expected, rtol=1e-12)


def test_bayes_identity(scalar):
    g = np.array([[0.7, -0.4]])
    post = scalar.posterior(g)
    theta = np.linspace(-2, 2, 9)
    lhs = post.logpdf(theta) + scalar.log_evidence(g)
    rhs = scalar.log_cond(np.repeat(g, 9, axis=0), theta) + scalar.log_prior(theta)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-10)


def test_posterior_variance_independent_of_data(scalar):
    sds = {scalar.posterior(np.array([[x, y]])).sd for x, y in [(0, 0), (3, -1), (-5, 8)]}
    assert len(sds) == 1


def test_grid_posterior_matches_closed_form(scalar):
    g = np.array([0.9, 0.2])
    exact = scalar.posterior(g)
    grid = posterior_density(scalar, g, method="grid")
    assert isinstance(grid, GridDensity)
    x = np.linspace(exact.mean - 8 * exact.sd, exact.mean + 8 * exact.sd, 2001)
    assert np.abs(grid.pdf(x) - exact.pdf(x)).max() < 1e-6
    assert grid.integral() == pytest.approx(1.0, abs=1e-6)


def test_grid_evidence_matches_closed_form(scalar):
    from infobounds.models import grid_log_evidence

    g = np.array([0.3, -1.1])
    assert grid_log_evidence(scalar, g) == pytest.approx(scalar.log_evidence(g), abs=1e-8)


def test_grid_resolves_narrow_posterior():
    m = make_gaussian_scalar_model([1.0, 0.0], 1e-6 * np.eye(2))
    grid = grid_posterior(m, np.array([0.3, 0.0]), 2001)
    exact = m.posterior(np.array([0.3, 0.0]))
    assert grid.mode == pytest.approx(exact.mean, abs=1e-5)


def test_impossible_data_raises():
    m = make_gaussian_scalar_model([1.0, 0.0], 1e-6 * np.eye(2))
    with pytest.raises(DataImpossibleError):
        grid_posterior(m, np.array([0.0, -1.0]), 2001)


def test_exponential_model_posterior_is_prior():
    m = make_exponential_prior_model(2.0)
    post = m.posterior(np.zeros(1))
    assert isinstance(post, Exponential) and post.rate == 2.0
    assert m.boundary_supported
    with pytest.raises(DomainError):
        m.check_in_support(-0.1)


def test_exponential_grid_posterior_reaches_boundary():
    m = make_exponential_prior_model(2.0)
    grid = posterior_density(m, np.zeros(1), method="grid")
    assert grid.nodes[0] == 0.0
    assert grid.values[0] == pytest.approx(2.0, rel=1e-4)


def test_flat_likelihood_model():
    m = make_flat_likelihood_model(1.0, 4.0)
    assert m.bayes_fi == 0.25
    assert m.posterior(np.zeros(1)).sd == 2.0


def test_location_model_is_one_dimensional():
    m = make_gaussian_location_model(0.5)
    assert m.data_dim == 1
    assert m.bayes_fi == pytest.approx(4.0 + 1.0)


def test_samplers_deterministic(scalar):
    a = scalar.sample_cond(np.random.default_rng(7), np.zeros(5))
    b = scalar.sample_cond(np.random.default_rng(7), np.zeros(5))
    assert np.array_equal(a, b)


def test_family_densities_against_scipy():
    x = np.linspace(-3, 3, 13)
    np.testing.assert_allclose(Normal(0.5, 2.0).pdf(x), stats.norm(0.5, 2.0).pdf(x), rtol=1e-13)
    np.testing.assert_allclose(Exponential(1.5).pdf(np.abs(x)), stats.expon(scale=1 / 1.5).pdf(np.abs(x)),
                               rtol=1e-13)
    cov = np.array([[1.0, 0.4], [0.4, 2.0]])
    pts = np.column_stack([x, x[::-1]])
    np.testing.assert_allclose(MultivariateNormal(np.zeros(2), cov).logpdf(pts),
                               stats.multivariate_normal(np.zeros(2), cov).logpdf(pts), rtol=1e-12)


# --------------------------------------------------------------------------
# Imaging model
# --------------------------------------------------------------------------


def test_imaging_posterior_precision():
    m = make_gaussian_imaging_model([[1.0, 0.0]], [[1.0]], np.eye(2))
    np.testing.assert_allclose(m.bayes_fim, np.diag([2.0, 1.0]), atol=1e-14)
    np.testing.assert_allclose(m.params.posterior_cov, np.diag([0.5, 1.0]), atol=1e-14)


def test_pseudoinverse_identity():
    rng = np.random.default_rng(11)
    h = rng.normal(size=(2, 3))
    m = make_gaussian_imaging_model(h, np.eye(2), np.eye(3))
    assert m.params.row_identity
    np.testing.assert_allclose(h @ m.params.pinv, np.eye(2), atol=1e-8)


def test_imaging_posterior_against_sampler():
    # conjugate sampler oracle: draw (theta, g) jointly, condition by regression
    rng = np.random.default_rng(5)
    h = np.array([[1.0, 0.5, 0.0], [0.0, 1.0, -1.0]])
    kn = np.array([[0.5, 0.1], [0.1, 0.4]])
    kt = np.diag([1.0, 2.0, 0.5])
    m = make_gaussian_imaging_model(h, kn, kt)
    n = 200_000
    theta = m.sample_prior(rng, n)
    g = m.sample_cond(rng, theta)
    # posterior covariance = Cov(theta) - Cov(theta,g) Cov(g)^-1 Cov(g,theta)
    joint = np.cov(np.hstack([theta, g]).T)
    ctt, ctg, cgg = joint[:3, :3], joint[:3, 3:], joint[3:, 3:]
    brute = ctt - ctg @ np.linalg.solve(cgg, ctg.T)
    np.testing.assert_allclose(m.params.posterior_cov, brute, atol=0.02)


def test_rank_deficient_reports_gap():
    with pytest.raises(RankDeficientError, match="singular value"):
        make_gaussian_imaging_model([[1.0, 0.0], [2.0, 0.0]], np.eye(2), np.eye(2))


def test_imaging_shape_mismatch():
    with pytest.raises(ShapeError):
        make_gaussian_imaging_model([[1.0, 0.0]], np.eye(2), np.eye(2))


def test_imaging_gradients_match_finite_difference():
    m = make_gaussian_imaging_model([[1.0, 0.3]], [[0.7]], np.array([[1.0, 0.2], [0.2, 0.5]]))
    rng = np.random.default_rng(2)
    theta = rng.normal(size=(4, 2))
    g = rng.normal(size=(4, 1))
    h = 1e-6
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        fd = (m.log_cond(g, theta + e) - m.log_cond(g, theta - e)) / (2 * h)
        np.testing.assert_allclose(m.cond_grad(g, theta)[:, j], fd, rtol=1e-5, atol=1e-8)
        fd = (m.log_prior(theta + e) - m.log_prior(theta - e)) / (2 * h)
        np.testing.assert_allclose(m.prior_grad(theta)[:, j], fd, rtol=1e-5, atol=1e-8)


def test_multivariate_normalizer_uses_dimension():
    # a 3-d standard normal at the origin: -(3/2) ln 2 pi
    mvn = MultivariateNormal(np.zeros(3), np.eye(3))
    assert float(mvn.logpdf(np.zeros((1, 3)))[0]) == pytest.approx(-1.5 * math.log(2 * math.pi), abs=1e-14)
