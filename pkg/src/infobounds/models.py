"""Statistical models: prior, conditional data density, posterior.

A model bundles vectorized callables.  Scalar-parameter models take ``theta``
of shape ``(n,)`` and data ``g`` of shape ``(n, M)``; vector-parameter models
take ``theta`` of shape ``(n, p)``.  Densities are handled in log form
throughout.

Concrete instances:

* :func:`make_gaussian_scalar_model`: a known unit signal vector scaled by the
  parameter, correlated Gaussian noise, Gaussian prior.
* :func:`make_gaussian_imaging_model`: linear imaging system ``g = H theta + n``
  with Gaussian noise and Gaussian prior on the object vector.
* :func:`make_exponential_prior_model` and :func:`make_flat_likelihood_model`:
  data carry no information, so the posterior equals the prior.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional, Union

import numpy as np
from scipy import linalg
from scipy.special import logsumexp

from .errors import (
    DataImpossibleError,
    DomainError,
    ModelError,
    NormalizationError,
    NotPositiveDefiniteError,
    RankDeficientError,
    ShapeError,
    UnsupportedError,
)

LOG_2PI = math.log(2.0 * math.pi)
# Truncation of infinite supports, in effective standard deviations.
TAIL_SDS = 8.0
# Grid windows keep nodes within this many nats of the peak (8 sd for a Gaussian).
LOG_DROP = 0.5 * TAIL_SDS**2
RANK_TOL = 1e-10
EVIDENCE_FLOOR = 1e-300
GRID_NODES = 2001
FD_STEP = 1e-5

Array = np.ndarray


# --------------------------------------------------------------------------
# Posterior families
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Normal:
    mean: float
    sd: float

    @property
    def mode(self) -> float:
        return self.mean

    @property
    def support(self) -> tuple[float, float]:
        return (-math.inf, math.inf)

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        return -0.5 * ((x - self.mean) / self.sd) ** 2 - math.log(self.sd) - 0.5 * LOG_2PI

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    def score(self, x):
        return -(np.asarray(x, dtype=float) - self.mean) / self.sd**2

    def sample(self, rng: np.random.Generator, n: int) -> Array:
        return self.mean + self.sd * rng.standard_normal(n)


@dataclass(frozen=True)
class Exponential:
    """Exponential density ``rate * exp(-rate (x - loc))`` on ``[loc, inf)``."""

    rate: float
    loc: float = 0.0

    @property
    def mode(self) -> float:
        return self.loc

    @property
    def support(self) -> tuple[float, float]:
        return (self.loc, math.inf)

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(invalid="ignore"):
            out = math.log(self.rate) - self.rate * (x - self.loc)
        return np.where(x >= self.loc, out, -np.inf)

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    def score(self, x):
        return np.full_like(np.asarray(x, dtype=float), -self.rate)

    def sample(self, rng: np.random.Generator, n: int) -> Array:
        return self.loc + rng.exponential(1.0 / self.rate, n)


@dataclass(frozen=True)
class MultivariateNormal:
    mean: Array
    cov: Array

    @cached_property
    def precision(self) -> Array:
        p = linalg.cho_solve(linalg.cho_factor(self.cov, lower=True), np.eye(len(self.mean)))
        return 0.5 * (p + p.T)

    @cached_property
    def _chol(self) -> Array:
        return linalg.cholesky(self.cov, lower=True)

    @property
    def mode(self) -> Array:
        return self.mean

    def logpdf(self, x):
        x = np.atleast_2d(x)
        z = linalg.solve_triangular(self._chol, (x - self.mean).T, lower=True)
        logdet = 2.0 * np.sum(np.log(np.diag(self._chol)))
        return -0.5 * np.sum(z**2, axis=0) - 0.5 * (len(self.mean) * LOG_2PI + logdet)

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    def score(self, x):
        return -(np.atleast_2d(x) - self.mean) @ self.precision

    def sample(self, rng: np.random.Generator, n: int) -> Array:
        z = rng.standard_normal((n, len(self.mean)))
        return self.mean + z @ self._chol.T


NORMALIZATION_RTOL = 1e-10
NORMALIZATION_MAX_NODES = 1 << 20


@dataclass(frozen=True)
class GridDensity:
    """Density tabulated on an increasing set of nodes.

    ``log_values`` are normalized so the density integrates to one; the
    trapezoid integral over the nodes agrees once the grid resolves it.  When ``log_density`` is present (unnormalized, vectorized) the grid
    can be refined; ``log_norm`` converts it to the normalized scale.
    """

    nodes: Array
    log_values: Array
    log_density: Optional[Callable[[Array], Array]] = None
    log_norm: float = 0.0
    mode: Optional[float] = None

    @classmethod
    def from_log_density(cls, log_density, lo: float, hi: float, n_nodes: int = GRID_NODES, mode=None):
        if n_nodes < 3:
            raise ValueError("a grid density needs at least 3 nodes")
        nodes = np.linspace(lo, hi, n_nodes)
        raw = np.asarray(log_density(nodes), dtype=float)
        # normalize the function, not the possibly coarse grid: refine until the trapezoid settles
        log_norm = _log_trapezoid(raw, nodes)
        fine = max(n_nodes, 3)
        while fine < NORMALIZATION_MAX_NODES:
            fine = 2 * fine - 1
            x = np.linspace(lo, hi, fine)
            new = _log_trapezoid(np.asarray(log_density(x), dtype=float), x)
            done = abs(new - log_norm) <= NORMALIZATION_RTOL
            log_norm = new
            if done:
                break
        return cls(nodes, raw - log_norm, log_density, log_norm, mode)

    @property
    def values(self) -> Array:
        return np.exp(self.log_values)

    @property
    def support(self) -> tuple[float, float]:
        return (float(self.nodes[0]), float(self.nodes[-1]))

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.log_density is not None:
            out = np.asarray(self.log_density(x), dtype=float) - self.log_norm
        else:
            out = np.interp(x, self.nodes, self.log_values, left=-np.inf, right=-np.inf)
        return np.where((x < self.nodes[0]) | (x > self.nodes[-1]), -np.inf, out)

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    def score(self, x):
        """Derivative of the log density, interpolated from central differences.

        NaN within one node of either end of the grid.
        """
        x = np.asarray(x, dtype=float)
        d = np.gradient(self.log_values, self.nodes)
        out = np.interp(x, self.nodes, d)
        inner = (x > self.nodes[1]) & (x < self.nodes[-2])
        return np.where(inner, out, np.nan)

    def integral(self) -> float:
        return float(np.trapezoid(self.values, self.nodes))


PosteriorFamily = Union[Normal, Exponential, MultivariateNormal, GridDensity]


def _log_trapezoid(log_f: Array, x: Array) -> float:
    """log of the trapezoid integral of exp(log_f) over x, without underflow."""
    w = np.empty_like(x)
    dx = np.diff(x)
    w[0] = dx[0] / 2
    w[-1] = dx[-1] / 2
    w[1:-1] = (dx[:-1] + dx[1:]) / 2
    return float(logsumexp(log_f, b=w))


# --------------------------------------------------------------------------
# Model containers
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ScalarModel:
    """Joint model for a scalar parameter and an ``M``-dimensional data vector.

    The analytic attributes (``fisher``, ``bayes_fi``, ``posterior`` ...) are
    optional; estimators fall back to Monte Carlo or grids when absent.
    """

    log_prior: Callable[[Array], Array]
    log_cond: Callable[[Array, Array], Array]
    sample_prior: Callable[[np.random.Generator, int], Array]
    sample_cond: Callable[[np.random.Generator, Array], Array]
    prior_log_deriv: Optional[Callable[[Array], Array]] = None
    cond_log_deriv: Optional[Callable[[Array, Array], Array]] = None
    posterior_log_deriv: Optional[Callable[[Array, Array], Array]] = None
    support: tuple[float, float] = (-math.inf, math.inf)
    data_dim: int = 1
    prior: Optional[PosteriorFamily] = None
    posterior: Optional[Callable[[Array], PosteriorFamily]] = None
    posterior_mean: Optional[Callable[[Array], Array]] = None
    log_evidence: Optional[Callable[[Array], float]] = None
    fisher: Optional[Callable[[Array], Array]] = None
    bayes_fi: Optional[float] = None
    prior_loc: float = 0.0
    prior_scale: float = 1.0
    flat_prior: bool = False
    params: object = None
    name: str = "custom"

    param_dim = 1
    is_vector = False

    def prior_density(self, theta):
        return np.exp(self.log_prior(np.asarray(theta, dtype=float)))

    def cond_density(self, g, theta):
        return np.exp(self.log_cond(np.atleast_2d(g), np.asarray(theta, dtype=float)))

    def prior_score(self, theta):
        """d/dtheta ln pr(theta), closed form or central difference."""
        theta = np.asarray(theta, dtype=float)
        if self.prior_log_deriv is not None:
            return self.prior_log_deriv(theta)
        h = FD_STEP * (1.0 + np.abs(theta))
        return (self.log_prior(theta + h) - self.log_prior(theta - h)) / (2 * h)

    def cond_score(self, g, theta):
        """d/dtheta ln pr(g|theta), closed form or central difference."""
        g = np.atleast_2d(g)
        theta = np.broadcast_to(np.asarray(theta, dtype=float), (g.shape[0],))
        if self.cond_log_deriv is not None:
            return self.cond_log_deriv(g, theta)
        h = FD_STEP * (1.0 + np.abs(theta))
        return (self.log_cond(g, theta + h) - self.log_cond(g, theta - h)) / (2 * h)

    def tprime(self, g, theta):
        """Posterior score t'(g|theta): conditional score plus prior score."""
        return self.cond_score(g, theta) + self.prior_score(theta)

    @property
    def boundary_supported(self) -> bool:
        """True when the prior density is positive at a finite support endpoint."""
        for end in self.support:
            if math.isfinite(end) and np.exp(self.log_prior(np.array([end])))[0] > 0:
                return True
        return False

    def check_in_support(self, theta) -> None:
        lo, hi = self.support
        t = np.asarray(theta, dtype=float)
        if np.any(t < lo) or np.any(t > hi):
            raise DomainError(f"theta={theta} outside support [{lo}, {hi}]")


@dataclass(frozen=True)
class VectorModel:
    """Joint model for a ``p``-dimensional parameter vector."""

    log_prior: Callable[[Array], Array]
    log_cond: Callable[[Array, Array], Array]
    sample_prior: Callable[[np.random.Generator, int], Array]
    sample_cond: Callable[[np.random.Generator, Array], Array]
    param_dim: int
    data_dim: int
    prior_log_grad: Optional[Callable[[Array], Array]] = None
    cond_log_grad: Optional[Callable[[Array, Array], Array]] = None
    posterior_log_grad: Optional[Callable[[Array, Array], Array]] = None
    prior: Optional[MultivariateNormal] = None
    posterior: Optional[Callable[[Array], MultivariateNormal]] = None
    posterior_mean: Optional[Callable[[Array], Array]] = None
    fim: Optional[Callable[[Array], Array]] = None
    bayes_fim: Optional[Array] = None
    prior_loc: Optional[Array] = None
    flat_prior: bool = False
    params: object = None
    name: str = "custom"

    is_vector = True
    support = (-math.inf, math.inf)

    def prior_density(self, theta):
        return np.exp(self.log_prior(np.atleast_2d(theta)))

    def cond_density(self, g, theta):
        return np.exp(self.log_cond(np.atleast_2d(g), np.atleast_2d(theta)))

    def prior_grad(self, theta):
        theta = np.atleast_2d(np.asarray(theta, dtype=float))
        if self.prior_log_grad is not None:
            return self.prior_log_grad(theta)
        return _fd_grad(lambda t: self.log_prior(t), theta)

    def cond_grad(self, g, theta):
        g = np.atleast_2d(g)
        theta = np.broadcast_to(np.atleast_2d(np.asarray(theta, dtype=float)), (g.shape[0], self.param_dim))
        if self.cond_log_grad is not None:
            return self.cond_log_grad(g, theta)
        return _fd_grad(lambda t: self.log_cond(g, t), theta)

    def tprime(self, g, theta):
        return self.cond_grad(g, theta) + self.prior_grad(theta)

    boundary_supported = False

    def check_in_support(self, theta) -> None:
        if np.shape(theta)[-1] != self.param_dim:
            raise ShapeError(f"parameter vector must have length {self.param_dim}")


Model = Union[ScalarModel, VectorModel]


def _fd_grad(f, theta: Array) -> Array:
    out = np.empty_like(theta)
    for j in range(theta.shape[1]):
        h = FD_STEP * (1.0 + np.abs(theta[:, j]))
        up = theta.copy()
        dn = theta.copy()
        up[:, j] += h
        dn[:, j] -= h
        out[:, j] = (f(up) - f(dn)) / (2 * h)
    return out


# --------------------------------------------------------------------------
# Linear algebra helpers
# --------------------------------------------------------------------------


def _as_matrix(a, name: str) -> Array:
    m = np.atleast_2d(np.asarray(a, dtype=float))
    if m.ndim != 2:
        raise ShapeError(f"{name} must be a matrix, got shape {m.shape}")
    return m


def _spd_cholesky(k: Array, name: str) -> Array:
    if k.shape[0] != k.shape[1]:
        raise ShapeError(f"{name} must be square, got shape {k.shape}")
    if not np.allclose(k, k.T, rtol=1e-12, atol=1e-12 * np.abs(k).max()):
        raise NotPositiveDefiniteError(f"{name} is not symmetric")
    try:
        return linalg.cholesky(k, lower=True)
    except linalg.LinAlgError as exc:
        m = re.search(r"(\d+)", str(exc))
        pivot = m.group(1) if m else "?"
        raise NotPositiveDefiniteError(
            f"{name} is not positive definite: Cholesky failed at pivot {pivot} ({exc})"
        ) from None


def _gauss_logpdf_rows(r: Array, chol: Array) -> Array:
    """Log N(r; 0, L L^T) for each row of r."""
    z = linalg.solve_triangular(chol, r.T, lower=True)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    return -0.5 * np.sum(z**2, axis=0) - 0.5 * (chol.shape[0] * LOG_2PI + logdet)


# --------------------------------------------------------------------------
# Scalar Gaussian signal model
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class GaussianScalarSignalModel:
    """Data ``g = theta * s + n`` with ``n ~ N(0, K)`` and prior ``N(mu, sigma2)``.

    ``flat_prior`` replaces the Gaussian prior by the improper constant prior
    (the ``sigma2 -> inf`` limit) without touching infinities.
    """

    s: Array
    K: Array
    mu: float = 0.0
    sigma2: float = 1.0
    flat_prior: bool = False

    def __post_init__(self):
        s = np.asarray(self.s, dtype=float).ravel()
        k = _as_matrix(self.K, "K")
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "K", k)
        if k.shape != (len(s), len(s)):
            raise ShapeError(f"K has shape {k.shape}, expected {(len(s), len(s))}")
        if abs(np.linalg.norm(s) - 1.0) > 1e-10:
            raise NormalizationError(f"signal vector s must have unit norm, |s| = {np.linalg.norm(s)!r}")
        if not self.flat_prior and not self.sigma2 > 0:
            raise ModelError("prior variance sigma2 must be positive")
        object.__setattr__(self, "_chol", _spd_cholesky(k, "K"))

    @property
    def data_dim(self) -> int:
        return len(self.s)

    @cached_property
    def kinv_s(self) -> Array:
        return linalg.cho_solve((self._chol, True), self.s)

    @cached_property
    def signal_info(self) -> float:
        """s^T K^-1 s, the Fisher information carried by the data."""
        return float(self.s @ self.kinv_s)

    @property
    def prior_precision(self) -> float:
        return 0.0 if self.flat_prior else 1.0 / self.sigma2

    @property
    def bayes_fi(self) -> float:
        return self.signal_info + self.prior_precision

    @property
    def posterior_variance(self) -> float:
        return 1.0 / self.bayes_fi

    def parallel_component(self, g: Array) -> Array:
        """g_par, the coefficient of s in the K^-1-orthogonal split of g (the ML estimate)."""
        return np.atleast_2d(g) @ self.kinv_s / self.signal_info

    def posterior_mean(self, g: Array) -> Array:
        proj = np.atleast_2d(g) @ self.kinv_s
        return (proj + self.mu * self.prior_precision) / self.bayes_fi


def make_gaussian_scalar_model(s, K, mu: float = 0.0, sigma2: float = 1.0, flat_prior: bool = False,
                               name: str = "gaussian-scalar") -> ScalarModel:
    """Build the scalar Gaussian-signal model.

    Raises
    ------
    NotPositiveDefiniteError
        If ``K`` fails its Cholesky factorization; the message names the pivot.
    NormalizationError
        If ``s`` is not a unit vector.
    """
    p = GaussianScalarSignalModel(s, K, mu, sigma2, flat_prior)
    s, chol, a, kinv_s = p.s, p._chol, p.signal_info, p.kinv_s
    m = p.data_dim

    def log_cond(g, theta):
        g = np.atleast_2d(g)
        theta = np.broadcast_to(np.asarray(theta, dtype=float), (g.shape[0],))
        return _gauss_logpdf_rows(g - theta[:, None] * s, chol)

    def cond_log_deriv(g, theta):
        return np.atleast_2d(g) @ kinv_s - np.asarray(theta, dtype=float) * a

    def sample_cond(rng, theta):
        theta = np.asarray(theta, dtype=float)
        z = rng.standard_normal((len(theta), m))
        return theta[:, None] * s + z @ chol.T

    if flat_prior:
        def log_prior(theta):
            return np.zeros_like(np.asarray(theta, dtype=float))

        def prior_log_deriv(theta):
            return np.zeros_like(np.asarray(theta, dtype=float))

        def sample_prior(rng, n):
            raise UnsupportedError("cannot sample from a flat (improper) prior")

        log_evidence = None
        prior_scale = math.inf
        prior = None
    else:
        sd = math.sqrt(sigma2)
        prior = Normal(mu, sd)
        log_prior = prior.logpdf
        prior_log_deriv = prior.score
        sample_prior = prior.sample
        marg_chol = _spd_cholesky(p.K + sigma2 * np.outer(s, s), "K + sigma2 s s^T")

        def log_evidence(g):
            return float(_gauss_logpdf_rows(np.atleast_2d(g) - mu * s, marg_chol)[0])

        prior_scale = sd

    post_sd = math.sqrt(p.posterior_variance)

    def posterior(g):
        return Normal(float(p.posterior_mean(g)[0]), post_sd)

    def posterior_log_deriv(g, theta):
        return -(np.asarray(theta, dtype=float) - p.posterior_mean(g)) * p.bayes_fi

    return ScalarModel(
        prior=prior,
        posterior_log_deriv=posterior_log_deriv,
        log_prior=log_prior,
        prior_log_deriv=prior_log_deriv,
        log_cond=log_cond,
        cond_log_deriv=cond_log_deriv,
        sample_prior=sample_prior,
        sample_cond=sample_cond,
        data_dim=m,
        posterior=posterior,
        posterior_mean=p.posterior_mean,
        log_evidence=log_evidence,
        fisher=lambda theta: np.full_like(np.asarray(theta, dtype=float), a),
        bayes_fi=p.bayes_fi,
        prior_loc=mu,
        prior_scale=prior_scale,
        flat_prior=flat_prior,
        params=p,
        name=name,
    )


def make_gaussian_location_model(noise_sd: float, mu: float = 0.0, sigma2: float = 1.0, **kw) -> ScalarModel:
    """Single Gaussian measurement ``g ~ N(theta, noise_sd^2)``."""
    return make_gaussian_scalar_model([1.0], [[noise_sd**2]], mu, sigma2, name="gaussian-location", **kw)


# --------------------------------------------------------------------------
# Models whose data carry no information about the parameter
# --------------------------------------------------------------------------


def _uninformative_likelihood():
    def log_cond(g, theta):
        g = np.atleast_2d(g)
        return -0.5 * np.sum(g**2, axis=1) - 0.5 * g.shape[1] * LOG_2PI

    def cond_log_deriv(g, theta):
        return np.zeros(np.atleast_2d(g).shape[0])

    def sample_cond(rng, theta):
        return rng.standard_normal((len(np.asarray(theta)), 1))

    return log_cond, cond_log_deriv, sample_cond


def make_flat_likelihood_model(mu: float = 0.0, sigma2: float = 1.0) -> ScalarModel:
    """Gaussian prior with data independent of the parameter; posterior = prior."""
    prior = Normal(mu, math.sqrt(sigma2))
    log_cond, cond_log_deriv, sample_cond = _uninformative_likelihood()
    return ScalarModel(
        log_prior=prior.logpdf,
        prior_log_deriv=prior.score,
        log_cond=log_cond,
        cond_log_deriv=cond_log_deriv,
        sample_prior=prior.sample,
        sample_cond=sample_cond,
        prior=prior,
        posterior_log_deriv=lambda g, theta: prior.score(theta),
        posterior=lambda g: prior,
        posterior_mean=lambda g: np.full(np.atleast_2d(g).shape[0], mu),
        log_evidence=lambda g: float(log_cond(g, None)[0]),
        fisher=lambda theta: np.zeros_like(np.asarray(theta, dtype=float)),
        bayes_fi=1.0 / sigma2,
        prior_loc=mu,
        prior_scale=prior.sd,
        params={"mu": mu, "sigma2": sigma2},
        name="flat-likelihood",
    )


def make_exponential_prior_model(rate: float = 1.0) -> ScalarModel:
    """Exponential prior on ``[0, inf)`` and uninformative data.

    Every posterior is the exponential prior itself, the case where the
    posterior total variation equals the square root of the Bayesian
    information.
    """
    if not rate > 0:
        raise ModelError("rate must be positive")
    prior = Exponential(rate)
    log_cond, cond_log_deriv, sample_cond = _uninformative_likelihood()
    return ScalarModel(
        log_prior=prior.logpdf,
        prior_log_deriv=prior.score,
        log_cond=log_cond,
        cond_log_deriv=cond_log_deriv,
        sample_prior=prior.sample,
        sample_cond=sample_cond,
        support=(0.0, math.inf),
        prior=prior,
        posterior_log_deriv=lambda g, theta: prior.score(theta),
        posterior=lambda g: prior,
        posterior_mean=lambda g: np.full(np.atleast_2d(g).shape[0], 1.0 / rate),
        log_evidence=lambda g: float(log_cond(g, None)[0]),
        fisher=lambda theta: np.zeros_like(np.asarray(theta, dtype=float)),
        bayes_fi=rate**2,
        prior_loc=1.0 / rate,
        prior_scale=1.0 / rate,
        params={"rate": rate},
        name="exponential-prior",
    )


# --------------------------------------------------------------------------
# Vector Gaussian imaging model
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class GaussianImagingModel:
    """``g = H theta + n``, ``n ~ N(0, Kn)``, prior ``theta ~ N(mu_vec, Ktheta)``.

    ``H`` is ``M x N``.  Full rank is required; when ``M < N`` the
    pseudoinverse satisfies ``H H^+ = I`` and ``row_identity`` records the
    check.  For ``M >= N`` that identity does not hold and ``row_identity`` is
    False.
    """

    H: Array
    Kn: Array
    Ktheta: Array
    mu_vec: Array
    row_identity: bool = field(init=False, default=False)

    def __post_init__(self):
        h = _as_matrix(self.H, "H")
        kn = _as_matrix(self.Kn, "Kn")
        kt = _as_matrix(self.Ktheta, "Ktheta")
        mu = np.asarray(self.mu_vec, dtype=float).ravel()
        m, n = h.shape
        if kn.shape != (m, m):
            raise ShapeError(f"Kn has shape {kn.shape}, expected {(m, m)}")
        if kt.shape != (n, n):
            raise ShapeError(f"Ktheta has shape {kt.shape}, expected {(n, n)}")
        if mu.shape != (n,):
            raise ShapeError(f"mu_vec has length {mu.size}, expected {n}")
        sv = np.linalg.svd(h, compute_uv=False)
        if sv[-1] <= RANK_TOL * sv[0]:
            raise RankDeficientError(
                f"H is rank deficient: smallest singular value {sv[-1]:.3e} vs largest {sv[0]:.3e} "
                f"(ratio {sv[-1] / sv[0]:.3e} <= {RANK_TOL:g})"
            )
        for k, v in (("H", h), ("Kn", kn), ("Ktheta", kt), ("mu_vec", mu)):
            object.__setattr__(self, k, v)
        object.__setattr__(self, "_chol_n", _spd_cholesky(kn, "Kn"))
        object.__setattr__(self, "_chol_t", _spd_cholesky(kt, "Ktheta"))
        if m <= n:
            err = np.abs(h @ self.pinv - np.eye(m)).max()
            if err > 1e-8:
                raise RankDeficientError(f"H H^+ deviates from identity by {err:.3e}")
            object.__setattr__(self, "row_identity", True)

    @property
    def shape(self) -> tuple[int, int]:
        return self.H.shape

    @cached_property
    def pinv(self) -> Array:
        return np.linalg.pinv(self.H)

    @cached_property
    def cond_fim(self) -> Array:
        """H^T Kn^-1 H."""
        f = self.H.T @ linalg.cho_solve((self._chol_n, True), self.H)
        return 0.5 * (f + f.T)

    @cached_property
    def prior_precision(self) -> Array:
        p = linalg.cho_solve((self._chol_t, True), np.eye(self.H.shape[1]))
        return 0.5 * (p + p.T)

    @cached_property
    def posterior_precision(self) -> Array:
        """K_p^-1 = Ktheta^-1 + H^T Kn^-1 H, which is also the Bayesian FIM."""
        return self.prior_precision + self.cond_fim

    @cached_property
    def posterior_cov(self) -> Array:
        c = np.linalg.inv(self.posterior_precision)
        return 0.5 * (c + c.T)

    def posterior_mean(self, g: Array) -> Array:
        g = np.atleast_2d(g)
        rhs = g @ linalg.cho_solve((self._chol_n, True), self.H) + self.prior_precision @ self.mu_vec
        return rhs @ self.posterior_cov


def make_gaussian_imaging_model(H, Kn, Ktheta, mu_vec=None, name: str = "imaging") -> VectorModel:
    """Build the vector Gaussian imaging model.

    Raises
    ------
    RankDeficientError
        When the smallest singular value of ``H`` is below ``1e-10`` times the
        largest.
    ShapeError
        On inconsistent dimensions.
    """
    H = _as_matrix(H, "H")
    if mu_vec is None:
        mu_vec = np.zeros(H.shape[1])
    p = GaussianImagingModel(H, Kn, Ktheta, mu_vec)
    h, chol_n, chol_t, mu = p.H, p._chol_n, p._chol_t, p.mu_vec
    kn_inv_h = linalg.cho_solve((chol_n, True), h)
    m, n = h.shape

    def log_prior(theta):
        return _gauss_logpdf_rows(np.atleast_2d(theta) - mu, chol_t)

    def prior_log_grad(theta):
        return -(np.atleast_2d(theta) - mu) @ p.prior_precision

    def log_cond(g, theta):
        return _gauss_logpdf_rows(np.atleast_2d(g) - np.atleast_2d(theta) @ h.T, chol_n)

    def cond_log_grad(g, theta):
        r = np.atleast_2d(g) - np.atleast_2d(theta) @ h.T
        return r @ kn_inv_h

    def sample_prior(rng, k):
        return mu + rng.standard_normal((k, n)) @ chol_t.T

    def sample_cond(rng, theta):
        theta = np.atleast_2d(theta)
        return theta @ h.T + rng.standard_normal((len(theta), m)) @ chol_n.T

    post_cov = p.posterior_cov

    def posterior(g):
        return MultivariateNormal(p.posterior_mean(g)[0], post_cov)

    def posterior_log_grad(g, theta):
        return -(np.atleast_2d(theta) - p.posterior_mean(g)) @ p.posterior_precision

    return VectorModel(
        prior=MultivariateNormal(mu.copy(), p.Ktheta.copy()),
        posterior_log_grad=posterior_log_grad,
        log_prior=log_prior,
        prior_log_grad=prior_log_grad,
        log_cond=log_cond,
        cond_log_grad=cond_log_grad,
        sample_prior=sample_prior,
        sample_cond=sample_cond,
        param_dim=n,
        data_dim=m,
        posterior=posterior,
        posterior_mean=p.posterior_mean,
        fim=lambda theta: p.cond_fim.copy(),
        bayes_fim=p.posterior_precision.copy(),
        prior_loc=mu.copy(),
        params=p,
        name=name,
    )


# --------------------------------------------------------------------------
# Posterior evaluation
# --------------------------------------------------------------------------


def posterior_density(model: Model, g, method: str = "auto", n_nodes: int = GRID_NODES) -> PosteriorFamily:
    """Posterior of the parameter given one data vector ``g``.

    ``method`` is ``"analytic"``, ``"grid"`` or ``"auto"`` (closed form when the
    model has one).  The grid path tabulates ``pr(g|theta) pr(theta)`` on a
    window located by a coarse pass, then normalizes by the trapezoid rule.

    Raises
    ------
    DataImpossibleError
        If the marginal density ``pr(g)`` is below ``1e-300``.
    """
    g = np.atleast_2d(np.asarray(g, dtype=float))
    if method not in ("auto", "analytic", "grid"):
        raise ValueError(f"unknown method {method!r}")
    if method in ("auto", "analytic") and model.posterior is not None:
        return model.posterior(g)
    if method == "analytic":
        raise UnsupportedError(f"model {model.name!r} has no closed-form posterior")
    if model.is_vector:
        raise UnsupportedError("grid posteriors are only available for scalar parameters")
    return grid_posterior(model, g, n_nodes)


def grid_posterior(model: ScalarModel, g, n_nodes: int = GRID_NODES) -> GridDensity:
    if not math.isfinite(model.prior_scale):
        raise UnsupportedError("grid posterior needs a proper prior")
    g = np.atleast_2d(np.asarray(g, dtype=float))

    def log_joint(theta):
        theta = np.asarray(theta, dtype=float)
        flat = theta.ravel()
        gg = np.broadcast_to(g, (flat.size, g.shape[1]))
        with np.errstate(divide="ignore"):
            out = model.log_cond(gg, flat) + model.log_prior(flat)
        return out.reshape(theta.shape)

    lo_s, hi_s = model.support
    lo = max(lo_s, model.prior_loc - 4 * TAIL_SDS * model.prior_scale)
    hi = min(hi_s, model.prior_loc + 4 * TAIL_SDS * model.prior_scale)
    for _ in range(8):
        grid = GridDensity.from_log_density(log_joint, lo, hi, n_nodes)
        if not math.isfinite(grid.log_norm) or grid.log_norm < math.log(EVIDENCE_FLOOR):
            raise DataImpossibleError(f"data impossible under model: log pr(g) = {grid.log_norm}")
        keep = np.flatnonzero(grid.log_values > grid.log_values.max() - LOG_DROP)
        step = grid.nodes[1] - grid.nodes[0]
        new_lo = max(lo_s, grid.nodes[keep[0]] - step)
        new_hi = min(hi_s, grid.nodes[keep[-1]] + step)
        if abs(new_lo - lo) <= 1e-3 * (hi - lo) and abs(new_hi - hi) <= 1e-3 * (hi - lo):
            break
        lo, hi = new_lo, new_hi
    grid = GridDensity.from_log_density(log_joint, lo, hi, n_nodes)
    mode = float(grid.nodes[np.argmax(grid.log_values)])
    return GridDensity(grid.nodes, grid.log_values, grid.log_density, grid.log_norm, mode)


def grid_log_evidence(model: ScalarModel, g, n_nodes: int = GRID_NODES) -> float:
    """log pr(g) by trapezoid quadrature over the posterior window."""
    return grid_posterior(model, g, n_nodes).log_norm
