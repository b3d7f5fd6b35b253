"""Fisher information: classical, matrix, and the three Bayesian routes.

The Bayesian information ``F`` can be computed as

* the prior-averaged Fisher information plus the second moment of the prior
  score (:func:`bayesian_fi_prior_form`);
* the expected squared posterior score (:func:`bayesian_fi_posterior_form`);
* the variance of ``t'``, the derivative of the posterior-ratio statistic,
  whose mean is zero under smooth priors (:func:`bayesian_fi_var_tprime`).

Every function returns analytic values when the model declares them and
``method`` allows it, otherwise a Monte Carlo estimate with a jackknife error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from . import _mc
from .errors import EstimationError, UnsupportedError
from .models import (
    Exponential,
    GridDensity,
    MultivariateNormal,
    Normal,
    ScalarModel,
    VectorModel,
    posterior_density,
)

DEFAULT_SAMPLES = 100_000
MAX_REJECT_FRACTION = 0.01


@dataclass
class FisherResult:
    quantity: str
    value: Union[float, np.ndarray]
    method: str
    std_error: Union[float, np.ndarray, None] = None
    samples: int = 0
    seed: Optional[int] = None
    details: dict = field(default_factory=dict)

    def to_record(self) -> dict:
        def plain(x):
            if isinstance(x, np.ndarray):
                return x.tolist()
            if isinstance(x, (np.floating, np.integer)):
                return x.item()
            return x

        rec = {
            "quantity": self.quantity,
            "method": self.method,
            "value": plain(self.value),
            "std_error": plain(self.std_error),
            "samples": self.samples,
            "seed": self.seed,
        }
        if self.details:
            rec["details"] = {k: plain(v) for k, v in self.details.items()}
        return rec


def _use_analytic(method: str, available: bool) -> bool:
    if method not in ("auto", "analytic", "monte_carlo"):
        raise ValueError(f"unknown method {method!r}")
    if method == "analytic" and not available:
        raise UnsupportedError("no analytic value declared for this model")
    return available and method != "monte_carlo"


def _mean_result(quantity, values, n, seed, **details) -> FisherResult:
    value, se = _mc.mean_and_se(values)
    return FisherResult(quantity, value, "monte_carlo", se, n, seed, dict(details))


# --------------------------------------------------------------------------
# Classical information
# --------------------------------------------------------------------------


def fisher_information(model: ScalarModel, theta: float, n_samples: int = DEFAULT_SAMPLES, seed: int = 0,
                       method: str = "auto", jobs: int = 1) -> FisherResult:
    """F(theta) = E[(d/dtheta ln pr(g|theta))^2] over g ~ pr(g|theta)."""
    model.check_in_support(theta)
    if _use_analytic(method, model.fisher is not None):
        return FisherResult("fisher_information", float(model.fisher(np.array([theta]))[0]), "analytic")

    def draw(rng, k):
        th = np.full(k, float(theta))
        g = model.sample_cond(rng, th)
        return model.cond_score(g, th) ** 2

    return _mean_result("fisher_information", _mc.collect(draw, n_samples, seed, jobs), n_samples, seed)


def fisher_matrix(model: VectorModel, theta_vec, n_samples: int = DEFAULT_SAMPLES, seed: int = 0,
                  method: str = "auto", jobs: int = 1) -> FisherResult:
    """FIM(theta) = E[grad ln pr(g|theta) grad ln pr(g|theta)^T], symmetrized."""
    theta_vec = np.asarray(theta_vec, dtype=float)
    model.check_in_support(theta_vec)
    if _use_analytic(method, model.fim is not None):
        return FisherResult("fisher_matrix", np.asarray(model.fim(theta_vec), dtype=float), "analytic")

    def draw(rng, k):
        th = np.broadcast_to(theta_vec, (k, model.param_dim))
        return model.cond_grad(model.sample_cond(rng, th), th)

    grads = _mc.collect(draw, n_samples, seed, jobs)
    return _outer_result("fisher_matrix", grads, n_samples, seed)


def _outer_mean(grads: np.ndarray) -> np.ndarray:
    f = grads.T @ grads / len(grads)
    return 0.5 * (f + f.T)


def _outer_result(quantity, grads, n, seed) -> FisherResult:
    value, se = _mc.jackknife(_outer_mean, grads)
    return FisherResult(quantity, value, "monte_carlo", se, n, seed)


# --------------------------------------------------------------------------
# Bayesian information, scalar parameter
# --------------------------------------------------------------------------


def _draw_joint(model, rng, k):
    theta = model.sample_prior(rng, k)
    return theta, model.sample_cond(rng, theta)


def bayesian_fi_prior_form(model: ScalarModel, n_samples: int = DEFAULT_SAMPLES, seed: int = 0,
                           method: str = "auto", jobs: int = 1) -> FisherResult:
    """<F(theta)> + <(d/dtheta ln pr(theta))^2> over the prior.

    Where the model declares F(theta) in closed form it is used inside the
    average; otherwise one data draw per theta gives an unbiased term.  Samples
    with a non-finite prior score are discarded; more than 1% raises.
    """
    if _use_analytic(method, model.bayes_fi is not None):
        return FisherResult("bayesian_fi_prior_form", float(model.bayes_fi), "analytic")

    def draw(rng, k):
        theta = model.sample_prior(rng, k)
        if model.fisher is not None:
            info = model.fisher(theta)
        else:
            info = model.cond_score(model.sample_cond(rng, theta), theta) ** 2
        return info + model.prior_score(theta) ** 2

    values = _mc.collect(draw, n_samples, seed, jobs)
    ok = np.isfinite(values)
    rejected = int(n_samples - ok.sum())
    if rejected > MAX_REJECT_FRACTION * n_samples:
        raise EstimationError(f"{rejected} of {n_samples} prior samples had no finite prior score")
    return _mean_result("bayesian_fi_prior_form", values[ok], n_samples, seed, rejected=rejected)


def family_fisher_information(family) -> float:
    """Expected squared score <(d/dtheta ln p)^2> of a posterior family."""
    if isinstance(family, Normal):
        return 1.0 / family.sd**2
    if isinstance(family, Exponential):
        return family.rate**2
    if isinstance(family, MultivariateNormal):
        return family.precision
    if isinstance(family, GridDensity):
        p = family.values
        dp = np.gradient(p, family.nodes)
        with np.errstate(divide="ignore", invalid="ignore"):
            integrand = np.where(p > 0, dp**2 / p, 0.0)
        return float(np.trapezoid(integrand, family.nodes))
    raise UnsupportedError(f"unsupported family {type(family).__name__}")


def bayesian_fi_posterior_form(model, n_samples: int = DEFAULT_SAMPLES, seed: int = 0, method: str = "auto",
                               jobs: int = 1, grid_nodes: int = 401) -> FisherResult:
    """<< (d/dtheta ln pr(theta|g))^2 >> over the joint distribution.

    ``model`` may also be a single posterior family, in which case the
    expectation is over that family alone.  For models without a closed-form
    posterior each sample builds a grid posterior; samples within one node of
    the grid boundary have no derivative and are excluded (reported under
    ``details["excluded"]``).
    """
    name = "bayesian_fi_posterior_form"
    if isinstance(model, (Normal, Exponential, MultivariateNormal, GridDensity)):
        if _use_analytic(method, True) or isinstance(model, GridDensity):
            return FisherResult(name, family_fisher_information(model), "analytic")

        def draw_family(rng, k):
            x = model.sample(rng, k)
            s = model.score(x)
            return s**2 if s.ndim == 1 else np.einsum("ni,nj->nij", s, s).reshape(k, -1)

        values = _mc.collect(draw_family, n_samples, seed, jobs)
        if values.ndim == 1:
            return _mean_result(name, values, n_samples, seed)
        p = len(model.mean)
        value, se = _mc.jackknife(lambda v: v.mean(axis=0).reshape(p, p), values)
        return FisherResult(name, value, "monte_carlo", se, n_samples, seed)

    if _use_analytic(method, model.bayes_fi is not None):
        return FisherResult(name, float(model.bayes_fi), "analytic")

    if model.posterior_log_deriv is not None:
        def draw(rng, k):
            theta, g = _draw_joint(model, rng, k)
            return model.posterior_log_deriv(g, theta) ** 2
    else:
        def draw(rng, k):
            theta, g = _draw_joint(model, rng, k)
            out = np.empty(k)
            for i in range(k):
                post = posterior_density(model, g[i], n_nodes=grid_nodes)
                out[i] = post.score(theta[i]) ** 2
            return out

    values = _mc.collect(draw, n_samples, seed, jobs)
    ok = np.isfinite(values)
    return _mean_result(name, values[ok], n_samples, seed, excluded=int(n_samples - ok.sum()))


def bayesian_fi_var_tprime(model: ScalarModel, n_samples: int = DEFAULT_SAMPLES, seed: int = 0,
                           jobs: int = 1) -> FisherResult:
    """Sample variance of t' = d/dtheta ln pr(g|theta) + d/dtheta ln pr(theta).

    The sample mean of t' and its standard error are reported rather than
    assumed zero.  Priors whose density is positive at a finite support
    endpoint are flagged: for them the mean of the prior score does not vanish
    and the variance understates the information; ``details["second_moment"]``
    carries <t'^2> in that case.
    """
    def draw(rng, k):
        theta, g = _draw_joint(model, rng, k)
        return model.tprime(g, theta)

    tp = _mc.collect(draw, n_samples, seed, jobs)
    var, var_se = _mc.jackknife(lambda x: float(np.var(x, ddof=1)), tp)
    mean, mean_se = _mc.mean_and_se(tp)
    second, second_se = _mc.mean_and_se(tp**2)
    details = {
        "mean": mean,
        "mean_se": mean_se,
        "second_moment": second,
        "second_moment_se": second_se,
        "boundary_supported_prior": model.boundary_supported,
    }
    return FisherResult("bayesian_fi_var_tprime", float(var), "monte_carlo", float(var_se), n_samples, seed,
                        details)


def bayesian_fim(model: VectorModel, n_samples: int = DEFAULT_SAMPLES, seed: int = 0, method: str = "auto",
                 jobs: int = 1) -> FisherResult:
    """Bayesian FIM: expected outer product of the posterior log-gradient."""
    if _use_analytic(method, model.bayes_fim is not None):
        return FisherResult("bayesian_fim", np.asarray(model.bayes_fim, dtype=float), "analytic")

    def draw(rng, k):
        theta, g = _draw_joint(model, rng, k)
        if model.posterior_log_grad is not None:
            return model.posterior_log_grad(g, theta)
        return model.tprime(g, theta)

    return _outer_result("bayesian_fim", _mc.collect(draw, n_samples, seed, jobs), n_samples, seed)


def directional_information(fim: np.ndarray, u) -> float:
    """u^T F u for a unit vector u."""
    u = np.asarray(u, dtype=float)
    return float(u @ fim @ u)


def is_psd(matrix: np.ndarray, tol: float = 1e-8) -> bool:
    m = np.asarray(matrix, dtype=float)
    return bool(np.allclose(m, m.T, atol=tol) and np.linalg.eigvalsh(0.5 * (m + m.T)).min() >= -tol)


def crb(info: float) -> float:
    """Cramer-Rao lower bound on the variance of an unbiased estimator."""
    return math.inf if info == 0 else 1.0 / info
