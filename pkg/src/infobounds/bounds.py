"""Numerical checks of the information inequalities and identities.

Each check returns a :class:`BoundReport` comparing a left side with a right
side.  The slack is always ``rhs - lhs``; ``relation`` records whether the
two sides should agree (``"eq"``) or the left should not exceed the right
(``"le"``).

Verdicts follow a three-sigma rule.  With combined standard error ``se`` and
a deterministic allowance ``atol`` (quadrature error, finite-step truncation):

* ``eq``: holds iff ``|slack| <= 3 se + atol``;
* ``le``: holds iff ``slack >= -(3 se + atol)``;

and any diagnostic flag raised along the way (unconverged quadrature,
non-monotone difference quotients, a prior with mass at a support boundary)
turns the verdict into ``inconclusive``.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from numpy.polynomial.laguerre import laggauss
from numpy.polynomial.legendre import leggauss
from scipy import integrate
from scipy.special import erf, expit
from scipy.stats import norm

from . import _mc
from .errors import EstimationError, NormalizationError, UnsupportedError
from .fisher import bayesian_fi_prior_form, directional_information
from .models import (
    Exponential,
    GaussianImagingModel,
    GaussianScalarSignalModel,
    Model,
    Normal,
    ScalarModel,
    VectorModel,
)
from .observer import (
    auc_mann_whitney,
    log_likelihood_ratio,
    pe_gaussian,
    pe_step_integrand,
)
from .tv import tv_average

HOLDS = "holds"
VIOLATED = "violated"
INCONCLUSIVE = "inconclusive"

SIGMAS = 3.0
DEFAULT_STEPS = (0.2, 0.1, 0.05, 0.025)
DEFAULT_SLOPE_SAMPLES = 1_000_000
DEFAULT_SAMPLES = 100_000
MAX_EXCLUDED_FRACTION = 1e-3
ZZ_TRUNCATION_SDS = 8.0
ZZ_RTOL = 1e-4
ZZ_MAX_REFINEMENTS = 4
ZZ_MC_SAMPLES = 2000
QUAD_EPS = 1e-11
LAGUERRE_MAX_NODES = 128


# --------------------------------------------------------------------------
# Reports
# --------------------------------------------------------------------------


def _plain(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return repr(x)
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if dataclasses.is_dataclass(x) and not isinstance(x, type):
        return {f.name: _plain(getattr(x, f.name)) for f in dataclasses.fields(x) if f.init}
    return x


def model_fingerprint(model: Model) -> dict:
    return {"name": model.name, "params": _plain(model.params)}


def config_hash(name: str, model: Optional[Model] = None, **settings) -> str:
    """Stable 16-hex-digit key for a report name, model and settings."""
    payload = {"report": name, "settings": _plain(settings)}
    if model is not None:
        payload["model"] = model_fingerprint(model)
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=repr)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def decide(slack: float, se: float, relation: str, atol: float = 0.0, flags: Sequence[str] = (),
           sigmas: float = SIGMAS) -> str:
    """Three-state verdict; see the module docstring."""
    if relation not in ("eq", "le"):
        raise ValueError(f"unknown relation {relation!r}")
    if flags or not math.isfinite(slack) or not math.isfinite(se):
        return INCONCLUSIVE
    tol = sigmas * se + atol
    ok = abs(slack) <= tol if relation == "eq" else slack >= -tol
    return HOLDS if ok else VIOLATED


@dataclass
class BoundReport:
    name: str
    lhs: float
    rhs: float
    lhs_se: float = 0.0
    rhs_se: float = 0.0
    relation: str = "le"
    atol: float = 0.0
    flags: list = field(default_factory=list)
    config_hash: str = ""
    details: dict = field(default_factory=dict)
    sigmas: float = SIGMAS
    verdict: str = field(init=False)

    def __post_init__(self):
        self.rejudge()

    def rejudge(self, sigmas: Optional[float] = None) -> str:
        """Recompute the verdict, optionally with a different sigma multiplier."""
        if sigmas is not None:
            self.sigmas = float(sigmas)
        self.verdict = decide(self.slack, self.std_error, self.relation, self.atol, self.flags, self.sigmas)
        return self.verdict

    @property
    def slack(self) -> float:
        return float(self.rhs - self.lhs)

    @property
    def std_error(self) -> float:
        return math.hypot(self.lhs_se, self.rhs_se)

    @property
    def ratio(self) -> float:
        return self.lhs / self.rhs if self.rhs != 0 else math.nan

    def to_record(self) -> dict:
        return _plain({
            "name": self.name,
            "relation": "lhs == rhs" if self.relation == "eq" else "lhs <= rhs",
            "lhs": self.lhs,
            "lhs_se": self.lhs_se,
            "rhs": self.rhs,
            "rhs_se": self.rhs_se,
            "slack": self.slack,
            "slack_convention": "rhs - lhs",
            "atol": self.atol,
            "ratio": self.ratio,
            "verdict": self.verdict,
            "flags": list(self.flags),
            "config_hash": self.config_hash,
            "details": self.details,
        })


@dataclass
class SlopeEstimate:
    """One-sided derivative from a ladder of difference quotients.

    ``value`` is the quotient at the finest step and ``extrapolated`` the
    first-order Richardson value from the two finest steps.  ``truncation``
    is ``|extrapolated - value|``, used as the deterministic allowance.
    """

    side: str
    value: float
    step_sizes: list
    extrapolated: float
    std_error: float
    quotients: list = field(default_factory=list)
    quotient_se: list = field(default_factory=list)
    flags: list = field(default_factory=list)
    details: dict = field(default_factory=dict)

    @property
    def truncation(self) -> float:
        return abs(self.extrapolated - self.value)

    @property
    def richardson_consistent(self) -> bool:
        """Extrapolation within the two finest quotients, or within 3 SE of both.

        A first-order extrapolation sits one correction beyond the finest
        quotient, so the comparison allows that correction.
        """
        qc, qf = self.quotients[-2], self.quotients[-1]
        lo, hi = min(qc, qf), max(qc, qf)
        r = self.extrapolated
        if lo <= r <= hi:
            return True
        tol = SIGMAS * self.std_error + self.truncation
        return abs(r - qc) <= tol + abs(qf - qc) and abs(r - qf) <= tol

    def to_record(self) -> dict:
        return _plain({
            "quantity": "slope",
            "side": self.side,
            "value": self.value,
            "extrapolated": self.extrapolated,
            "std_error": self.std_error,
            "step_sizes": self.step_sizes,
            "quotients": self.quotients,
            "quotient_se": self.quotient_se,
            "flags": self.flags,
            "details": self.details,
        })


def _sign(side: str) -> float:
    if side not in ("plus", "minus"):
        raise ValueError(f"side must be 'plus' or 'minus', got {side!r}")
    return 1.0 if side == "plus" else -1.0


def _check_steps(steps) -> np.ndarray:
    steps = np.asarray(steps, dtype=float)
    if steps.ndim != 1 or len(steps) < 2 or np.any(steps <= 0) or np.any(np.diff(steps) >= 0):
        raise ValueError("steps must be a decreasing sequence of at least two positive numbers")
    return steps


def _unit(u, dim: int) -> np.ndarray:
    u = np.asarray(u, dtype=float).ravel()
    if u.shape != (dim,):
        raise ValueError(f"direction must have length {dim}")
    if abs(np.linalg.norm(u) - 1.0) > 1e-10:
        raise NormalizationError(f"direction must be a unit vector, |u| = {np.linalg.norm(u)!r}")
    return u


def _richardson(q_coarse, q_fine, h_coarse, h_fine):
    r = h_coarse / h_fine
    return (r * q_fine - q_coarse) / (r - 1.0)


def _monotone_flag(diffs: np.ndarray, diff_se: np.ndarray) -> bool:
    """True when successive quotient changes reverse sign beyond noise."""
    tol = SIGMAS * diff_se + 1e-12 * (1.0 + np.abs(diffs).max(initial=0.0))
    sig = np.sign(np.where(np.abs(diffs) > tol, diffs, 0.0))
    sig = sig[sig != 0]
    return bool(len(sig) > 1 and np.any(sig != sig[0]))


# --------------------------------------------------------------------------
# EMSE and van Trees
# --------------------------------------------------------------------------


Estimator = Union[str, Callable[[np.ndarray], np.ndarray]]


def resolve_estimator(model: ScalarModel, estimator: Estimator) -> Callable[[np.ndarray], np.ndarray]:
    """Built-ins: ``posterior_mean``, ``ml_linear`` (Gaussian signal models) and ``prior_mean``."""
    if callable(estimator):
        return estimator
    if estimator == "posterior_mean":
        if model.posterior_mean is None:
            raise UnsupportedError("model declares no posterior mean")
        return model.posterior_mean
    if estimator == "ml_linear":
        if not isinstance(model.params, GaussianScalarSignalModel):
            raise UnsupportedError("ml_linear needs a Gaussian signal model")
        return model.params.parallel_component
    if estimator == "prior_mean":
        prior = model.prior
        if isinstance(prior, Normal):
            m = prior.mean
        elif isinstance(prior, Exponential):
            m = prior.loc + 1.0 / prior.rate
        else:
            raise UnsupportedError("prior mean unknown for this model")
        return lambda g: np.full(np.atleast_2d(g).shape[0], m)
    raise ValueError(f"unknown estimator {estimator!r}")


@dataclass
class EmseEstimate:
    value: float
    std_error: float
    estimator: str
    samples: int
    excluded: int = 0
    method: str = "monte_carlo"

    def to_record(self) -> dict:
        return _plain(dataclasses.asdict(self) | {"quantity": "emse"})


def emse(model: ScalarModel, estimator: Estimator = "posterior_mean", n_samples: int = DEFAULT_SAMPLES,
         seed: int = 0, jobs: int = 1) -> EmseEstimate:
    """Monte Carlo ``<(theta_hat(g) - theta)^2>`` over theta ~ prior, g ~ pr(g|theta).

    Non-finite estimates are dropped; more than 0.1% of them raises
    :class:`EstimationError`.
    """
    est = resolve_estimator(model, estimator)

    def draw(rng, k):
        theta = model.sample_prior(rng, k)
        g = model.sample_cond(rng, theta)
        with np.errstate(all="ignore"):
            return (np.asarray(est(g), dtype=float).reshape(k) - theta) ** 2

    sq = _mc.collect(draw, n_samples, seed, jobs)
    ok = np.isfinite(sq)
    excluded = int(n_samples - ok.sum())
    if excluded > MAX_EXCLUDED_FRACTION * n_samples:
        raise EstimationError(f"estimator returned non-finite values for {excluded} of {n_samples} samples")
    value, se = _mc.mean_and_se(sq[ok])
    label = estimator if isinstance(estimator, str) else getattr(estimator, "__name__", "custom")
    return EmseEstimate(value, se, label, n_samples, excluded)


def posterior_mean_emse_analytic(model: ScalarModel) -> Optional[float]:
    """Expected posterior variance where it is known in closed form, else None."""
    if isinstance(model.params, GaussianScalarSignalModel) and not model.flat_prior:
        return model.params.posterior_variance
    if model.name in ("flat-likelihood", "exponential-prior"):
        prior = model.prior
        return prior.sd**2 if isinstance(prior, Normal) else 1.0 / prior.rate**2
    return None


def van_trees_check(model: ScalarModel, estimator: Estimator = "posterior_mean",
                    n_samples: int = DEFAULT_SAMPLES, seed: int = 0, jobs: int = 1) -> BoundReport:
    """``1/F <= EMSE(estimator)``."""
    name = "van_trees"
    info = bayesian_fi_prior_form(model, n_samples, _mc.derive_seed(seed, name, "fi"), jobs=jobs)
    if info.value <= 0:
        raise EstimationError("Bayesian information is not positive")
    lhs = 1.0 / info.value
    lhs_se = (info.std_error or 0.0) / info.value**2
    e = emse(model, estimator, n_samples, _mc.derive_seed(seed, name, "emse"), jobs)
    return BoundReport(
        name, lhs, e.value, lhs_se, e.std_error, "le",
        config_hash=config_hash(name, model, estimator=e.estimator, n_samples=n_samples, seed=seed),
        details={"bayesian_fi": info.value, "bayesian_fi_method": info.method, "estimator": e.estimator,
                 "emse_excluded": e.excluded},
    )


# --------------------------------------------------------------------------
# Ziv-Zakai
# --------------------------------------------------------------------------


def _prior_nodes(model: ScalarModel, n: int) -> tuple[np.ndarray, np.ndarray]:
    prior = model.prior
    if isinstance(prior, Normal):
        x, w = hermegauss(n)
        return prior.mean + prior.sd * x, w / w.sum()
    if isinstance(prior, Exponential):
        # numpy's Laguerre weights overflow beyond ~180 nodes
        x, w = laggauss(min(n, LAGUERRE_MAX_NODES))
        return prior.loc + x / prior.rate, w / w.sum()
    raise UnsupportedError("prior quadrature needs a Normal or Exponential prior")


def _conditional_info(model: ScalarModel) -> float:
    """Constant Fisher information for models with a Gaussian log-likelihood ratio."""
    if isinstance(model.params, GaussianScalarSignalModel):
        return model.params.signal_info
    if model.name in ("flat-likelihood", "exponential-prior"):
        return 0.0
    raise UnsupportedError(f"no closed-form error probability for model {model.name!r}")


def _posterior_scale(model: Model, u=None) -> float:
    if model.is_vector:
        if model.bayes_fim is None:
            return 1.0
        return 1.0 / math.sqrt(directional_information(model.bayes_fim, u))
    if model.bayes_fi:
        return 1.0 / math.sqrt(model.bayes_fi)
    return model.prior_scale if math.isfinite(model.prior_scale) else 1.0


def _pe_pairs_analytic(model: ScalarModel, theta: np.ndarray, theta_tilde: np.ndarray, info: float) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        lp0 = model.log_prior(theta)
        lp1 = model.log_prior(theta_tilde)
        log_y = np.where(lp1 == -np.inf, np.inf, lp0 - lp1)
        pr0 = np.where(lp1 == -np.inf, 1.0, 1.0 / (1.0 + np.exp(np.clip(lp1 - lp0, -745, 709))))
    delta = np.abs(theta_tilde - theta) * math.sqrt(info)
    out = pe_gaussian(pr0, log_y, delta)
    return np.where(lp1 == -np.inf, 0.0, out)


def _zz_nodes(model: ScalarModel, theta: np.ndarray, n_delta: int, width: float):
    """Gauss-Legendre offsets on each half line, cut at the support boundary.

    Each half line is split into two panels.  Under a normal prior the break
    sits where ``pr(theta~) = pr(theta)``, the kink of ``min(Pr0, Pr1)`` when
    the data carry no information; elsewhere it is the midpoint.
    """
    xi, wi = leggauss(n_delta)
    lo, hi = model.support
    mirror = 2.0 * (model.prior.mean - theta) if isinstance(model.prior, Normal) else np.full_like(theta, np.nan)
    offsets, weights = [], []
    for sign, room in ((1.0, hi - theta), (-1.0, theta - lo)):
        length = np.minimum(width, room)
        brk = sign * mirror
        brk = np.where((brk > 0) & (brk < length), brk, 0.5 * length)
        for a, b in ((np.zeros_like(length), brk), (brk, length)):
            half = 0.5 * (b - a)[:, None]
            x = a[:, None] + half * (xi + 1.0)
            offsets.append(sign * x)
            weights.append(half * wi * x)  # |theta~ - theta| folded in
    return np.hstack(offsets), np.hstack(weights)


def _zz_once(model, n_theta, n_delta, width, backend, order, n_mc, seed, info):
    theta, w_theta = _prior_nodes(model, n_theta)
    offsets, w_delta = _zz_nodes(model, theta, n_delta, width)
    th = np.broadcast_to(theta[:, None], offsets.shape)
    tt = th + offsets
    if backend == "analytic":
        if order == "forward":
            pe = _pe_pairs_analytic(model, th.ravel(), tt.ravel(), info)
        else:
            pe = _pe_pairs_analytic(model, tt.ravel(), th.ravel(), info)
        pe = pe.reshape(offsets.shape)
        return 0.5 * float(w_theta @ np.sum(w_delta * pe, axis=1)), 0.0

    total, var = 0.0, 0.0
    for i in range(n_theta):
        rng = np.random.default_rng(np.random.SeedSequence(list(_mc.derive_seed(seed, "zz", str(i)))))
        n_pairs = offsets.shape[1]
        g = model.sample_cond(rng, np.full(n_mc, theta[i]))
        g_rep = np.repeat(g, n_pairs, axis=0)
        th_rep = np.full(n_mc * n_pairs, theta[i])
        tt_rep = np.tile(tt[i], n_mc)
        vals = pe_step_integrand(model, th_rep, tt_rep, g_rep).reshape(n_mc, n_pairs)
        per_sample = 0.5 * vals @ w_delta[i]
        total += w_theta[i] * per_sample.mean()
        var += w_theta[i] ** 2 * per_sample.var(ddof=1) / n_mc
    return float(total), math.sqrt(var)


@dataclass
class ZivZakaiEstimate:
    value: float
    std_error: float
    converged: bool
    error_estimate: float
    n_theta: int
    n_delta: int
    backend: str
    order: str = "forward"
    trace: list = field(default_factory=list)

    def to_record(self) -> dict:
        return _plain(dataclasses.asdict(self) | {"quantity": "ziv_zakai_rhs"})


def ziv_zakai_rhs(model: ScalarModel, n_theta: int = 48, n_delta: int = 48, mpe_backend: str = "analytic",
                  order: str = "forward", n_mc: int = ZZ_MC_SAMPLES, seed: int = 0) -> ZivZakaiEstimate:
    """``1/2 < integral P_e(theta, theta~) |theta~ - theta| dtheta~ >_theta``.

    The outer average uses Gauss-Hermite (normal prior) or Gauss-Laguerre
    (exponential prior) nodes; the inner integral uses Gauss-Legendre on each
    side of ``theta``, truncated at 8 posterior standard deviations and at
    the support boundary.  Node counts and the truncation width are doubled
    until successive values agree to 1e-4 relative; failure to do so within
    four doublings sets ``converged=False``.

    ``order="swapped"`` evaluates ``P_e(theta~, theta)`` instead, which must
    give the same number.
    """
    if mpe_backend not in ("analytic", "monte_carlo"):
        raise ValueError(f"unknown MPE backend {mpe_backend!r}")
    if order not in ("forward", "swapped"):
        raise ValueError(f"unknown order {order!r}")
    if mpe_backend == "monte_carlo" and order == "swapped":
        raise UnsupportedError("swapped ordering is only defined for the analytic backend")
    if model.flat_prior:
        raise UnsupportedError("the bound needs a proper prior")
    info = _conditional_info(model) if mpe_backend == "analytic" else 0.0
    width = ZZ_TRUNCATION_SDS * _posterior_scale(model)

    trace = []
    value, se = _zz_once(model, n_theta, n_delta, width, mpe_backend, order, n_mc, seed, info)
    trace.append((n_theta, n_delta, width, value))
    converged, err = False, math.inf
    for _ in range(ZZ_MAX_REFINEMENTS):
        n_theta, n_delta, width = 2 * n_theta, 2 * n_delta, 2 * width
        new, new_se = _zz_once(model, n_theta, n_delta, width, mpe_backend, order, n_mc, seed, info)
        trace.append((n_theta, n_delta, width, new))
        err = abs(new - value)
        value, se = new, new_se
        if err <= ZZ_RTOL * abs(value) + SIGMAS * math.sqrt(2.0) * se:
            converged = True
            break
    return ZivZakaiEstimate(value, se, converged, err, n_theta, n_delta, mpe_backend, order, trace)


def ziv_zakai_check(model: ScalarModel, n_samples: int = DEFAULT_SAMPLES, seed: int = 0,
                    mpe_backend: str = "analytic", jobs: int = 1, **zz_kw) -> BoundReport:
    """Ziv-Zakai right side ``<= EMSE(posterior_mean)``.

    The comparison uses the closed-form expected posterior variance where
    the model provides one and a Monte Carlo EMSE otherwise.  The Gaussian
    bound is tight, so the quadrature error enters as ``atol``.
    """
    name = "ziv_zakai"
    zz = ziv_zakai_rhs(model, mpe_backend=mpe_backend, seed=_mc.derive_seed(seed, name, "rhs"), **zz_kw)
    analytic = posterior_mean_emse_analytic(model)
    if analytic is not None:
        rhs, rhs_se, emse_method = analytic, 0.0, "analytic"
    else:
        e = emse(model, "posterior_mean", n_samples, _mc.derive_seed(seed, name, "emse"), jobs)
        rhs, rhs_se, emse_method = e.value, e.std_error, "monte_carlo"
    atol = max(zz.error_estimate, ZZ_RTOL * abs(zz.value)) if math.isfinite(zz.error_estimate) else 0.0
    return BoundReport(
        name, zz.value, rhs, zz.std_error, rhs_se, "le", atol=atol,
        flags=[] if zz.converged else ["quadrature_unconverged"],
        config_hash=config_hash(name, model, backend=mpe_backend, n_samples=n_samples, seed=seed, **zz_kw),
        details={"emse_method": emse_method, "quadrature": zz.to_record()},
    )


# --------------------------------------------------------------------------
# One-sided slope of the averaged error probability
# --------------------------------------------------------------------------


def _pe_average_analytic(model: Model, delta: float, u=None) -> float:
    """``<P_e(theta, theta + delta u)>_theta`` from the Gaussian closed form.

    Scalar models integrate over the prior adaptively, with a break point
    where ``theta + delta`` leaves the support.  For the imaging model the
    prior log-ratio is a linear function of theta, hence a scalar normal
    variable, and a Gauss-Hermite rule over it suffices.
    """
    if model.is_vector:
        p = model.params
        if not isinstance(p, GaussianImagingModel):
            raise UnsupportedError("analytic directional slopes need the Gaussian imaging model")
        prec = p.prior_precision
        q = float(u @ prec @ u)
        d = abs(delta) * math.sqrt(float(u @ p.cond_fim @ u))
        # ln pr(theta) - ln pr(theta + delta u) = delta sqrt(q) x + delta^2 q / 2, x standard normal
        a, b = delta * math.sqrt(q), 0.5 * delta**2 * q

        def g(x):
            log_y = a * x + b
            return float(norm.pdf(x) * pe_gaussian(expit(log_y), log_y, d))

        # P_e has a kink where the priors cross when the data carry no information along u
        kink = -b / a if a != 0 else 0.0
        pts = [kink] if -12 < kink < 12 else None
        val, _ = integrate.quad(g, -12, 12, points=pts, limit=400, epsabs=QUAD_EPS, epsrel=QUAD_EPS)
        return val

    info = _conditional_info(model)
    prior = model.prior
    if isinstance(prior, Normal):
        lo, hi = prior.mean - 12 * prior.sd, prior.mean + 12 * prior.sd
    elif isinstance(prior, Exponential):
        lo, hi = prior.loc, prior.loc + 60.0 / prior.rate
    else:
        raise UnsupportedError("analytic slope needs a Normal or Exponential prior")

    def f(t):
        return float(prior.pdf(np.array([t]))[0] * _pe_pairs_analytic(model, np.array([t]), np.array([t + delta]),
                                                                         info)[0])

    s_lo, s_hi = model.support
    points = [b - delta for b in (s_lo, s_hi) if math.isfinite(b) and lo < b - delta < hi]
    val, _ = integrate.quad(f, lo, hi, points=points or None, limit=400, epsabs=QUAD_EPS, epsrel=QUAD_EPS)
    return val


def mpe_slope(model: Model, side: str = "plus", steps: Sequence[float] = DEFAULT_STEPS,
              n_samples: int = DEFAULT_SLOPE_SAMPLES, seed: int = 0, u=None, backend: str = "monte_carlo",
              jobs: int = 1) -> SlopeEstimate:
    """One-sided derivative of ``<P_e(theta, theta~)>_theta`` at ``theta~ = theta``.

    ``steps`` are in posterior standard deviations.  Each quotient is
    ``(<P_e>(d) - 1/2) / (s d)`` with ``s = +1`` on the plus side and ``-1``
    on the minus side.  The Monte Carlo backend draws ``n_samples`` joint
    samples ``(theta, g)`` once and reuses them at every step.

    The baseline 1/2 is the zero-step limit for smooth priors; the linear
    extrapolation of the two finest averages to zero step is reported as
    ``details["baseline_extrapolated"]``.
    """
    sign = _sign(side)
    steps = _check_steps(steps)
    if model.is_vector:
        if u is None:
            raise ValueError("vector models need a direction u")
        u = _unit(u, model.param_dim)
    scale = _posterior_scale(model, u)
    deltas = steps * scale

    if backend == "analytic":
        averages = np.array([_pe_average_analytic(model, sign * d, u) for d in deltas])
        q = (averages - 0.5) / (sign * deltas)
        q_se = np.zeros_like(q)
        diff_se = np.zeros(len(q) - 1)
        r_se = 0.0
    elif backend == "monte_carlo":
        def draw(rng, k):
            theta = model.sample_prior(rng, k)
            g = model.sample_cond(rng, theta)
            cols = []
            for d in deltas:
                tt = theta + sign * d * u if model.is_vector else theta + sign * d
                cols.append(pe_step_integrand(model, theta, tt, g))
            return np.column_stack(cols)

        pe = _mc.collect(draw, n_samples, seed, jobs)
        quot = (pe - 0.5) / (sign * deltas)
        stats = [_mc.mean_and_se(quot[:, j]) for j in range(len(deltas))]
        q = np.array([s[0] for s in stats])
        q_se = np.array([s[1] for s in stats])
        averages = pe.mean(axis=0)
        diff_se = np.array([_mc.mean_and_se(quot[:, j + 1] - quot[:, j])[1] for j in range(len(deltas) - 1)])
        r_cols = _richardson(quot[:, -2], quot[:, -1], deltas[-2], deltas[-1])
        r_se = _mc.mean_and_se(r_cols)[1]
    else:
        raise ValueError(f"unknown backend {backend!r}")

    extrap = float(_richardson(q[-2], q[-1], deltas[-2], deltas[-1]))
    # straight line through the two finest averages, evaluated at zero step
    baseline = float((deltas[-2] * averages[-1] - deltas[-1] * averages[-2]) / (deltas[-2] - deltas[-1]))
    flags = ["nonmonotone_quotients"] if _monotone_flag(np.diff(q), diff_se) else []
    details = {
        "backend": backend,
        "scale": scale,
        "deltas": deltas.tolist(),
        "averages": averages.tolist(),
        "baseline": 0.5,
        "baseline_extrapolated": baseline,
        "baseline_deviation": baseline - 0.5,
        "samples": n_samples if backend == "monte_carlo" else 0,
    }
    return SlopeEstimate(side, float(q[-1]), steps.tolist(), extrap, float(r_se), q.tolist(), q_se.tolist(),
                         flags, details)


def _slope_seed(seed, name, side):
    return _mc.derive_seed(seed, name, side)


def slope_tv_identity_check(model: Model, side: str = "plus", steps=DEFAULT_STEPS,
                            n_samples: int = DEFAULT_SLOPE_SAMPLES, seed: int = 0, u=None,
                            backend: str = "monte_carlo", tv_samples: int = 10_000, jobs: int = 1) -> BoundReport:
    """``4 |slope| == <posterior TV>``, both sides on the TV scale."""
    name = "slope_tv_identity"
    s = mpe_slope(model, side, steps, n_samples, _slope_seed(seed, name, side), u, backend, jobs)
    lhs = -4.0 * _sign(side) * s.extrapolated
    tv = tv_average(model, tv_samples, seed=_mc.derive_seed(seed, name, "tv"), u=None if u is None else
                    _unit(u, model.param_dim), jobs=jobs)
    flags = list(s.flags)
    if model.boundary_supported and side == "minus":
        flags.append("boundary_prior")
    return BoundReport(
        name, lhs, tv.value, 4.0 * s.std_error, tv.std_error or 0.0, "eq", atol=4.0 * s.truncation, flags=flags,
        config_hash=config_hash(name, model, side=side, steps=list(steps), n_samples=n_samples, seed=seed,
                                u=None if u is None else list(np.ravel(u)), backend=backend),
        details={"slope": s.to_record(), "tv_abs_tprime": tv.details.get("abs_tprime"),
                 "tv_abs_tprime_se": tv.details.get("abs_tprime_se")},
    )


def _bayes_info(model: Model, u, seed, jobs) -> tuple[float, float]:
    if model.is_vector:
        if model.bayes_fim is None:
            raise UnsupportedError("model declares no Bayesian FIM")
        return directional_information(model.bayes_fim, u), 0.0
    info = bayesian_fi_prior_form(model, DEFAULT_SAMPLES, seed, jobs=jobs)
    return info.value, info.std_error or 0.0


def schwarz_bound_check(model: Model, side: str = "plus", steps=DEFAULT_STEPS,
                        n_samples: int = DEFAULT_SLOPE_SAMPLES, seed: int = 0, u=None,
                        backend: str = "monte_carlo", jobs: int = 1) -> BoundReport:
    """``|slope| <= sqrt(F) / 4``; ``ratio`` is their quotient.

    Priors with mass at a finite support endpoint break the zero-order
    baseline on the side facing that endpoint; checks on that side are
    flagged ``boundary_prior``, and for such models the opposite-side slope
    is computed and reported for reference.
    """
    name = "schwarz"
    if model.is_vector:
        u = _unit(u, model.param_dim)
    s = mpe_slope(model, side, steps, n_samples, _slope_seed(seed, name, side), u, backend, jobs)
    info, info_se = _bayes_info(model, u, _mc.derive_seed(seed, name, "fi"), jobs)
    rhs = 0.25 * math.sqrt(info)
    rhs_se = 0.125 * info_se / math.sqrt(info) if info > 0 else 0.0
    flags = list(s.flags)
    details = {"slope": s.to_record(), "bayesian_fi": info}
    if model.boundary_supported:
        other = "minus" if side == "plus" else "plus"
        o = mpe_slope(model, other, steps, n_samples, _slope_seed(seed, name, other), u, backend, jobs)
        details["opposite_side"] = other
        details["opposite_side_slope"] = o.extrapolated
        details["opposite_side_ratio"] = abs(o.extrapolated) / rhs if rhs > 0 else math.nan
        if side == "minus":
            flags.append("boundary_prior")
    return BoundReport(
        name, abs(s.extrapolated), rhs, s.std_error, rhs_se, "le", atol=s.truncation, flags=flags,
        config_hash=config_hash(name, model, side=side, steps=list(steps), n_samples=n_samples, seed=seed,
                                u=None if u is None else list(np.ravel(u)), backend=backend),
        details=details,
    )


def vector_slope_check(model: VectorModel, u, side: str = "plus", steps=DEFAULT_STEPS,
                       n_samples: int = DEFAULT_SLOPE_SAMPLES, seed: int = 0, backend: str = "monte_carlo",
                       jobs: int = 1) -> BoundReport:
    """Directional ``|slope| <= sqrt(u^T F u) / 4`` for a vector parameter."""
    if not model.is_vector:
        raise ValueError("vector_slope_check needs a vector model")
    report = schwarz_bound_check(model, side, steps, n_samples, seed, u, backend, jobs)
    report.name = "vector_slope"
    report.config_hash = config_hash("vector_slope", model, side=side, steps=list(steps), n_samples=n_samples,
                                     seed=seed, u=list(np.ravel(u)), backend=backend)
    return report


# --------------------------------------------------------------------------
# AUC slope
# --------------------------------------------------------------------------


def _cond_info_at(model: Model, theta, u) -> float:
    if model.is_vector:
        if model.fim is None:
            raise UnsupportedError("model declares no FIM")
        return directional_information(model.fim(np.asarray(theta, dtype=float)), u)
    if model.fisher is None:
        raise UnsupportedError("model declares no Fisher information")
    return float(model.fisher(np.array([float(theta)]))[0])


def auc_slope(model: Model, theta, side: str = "plus", steps=DEFAULT_STEPS, backend: str = "analytic",
              n_samples: int = DEFAULT_SAMPLES, seed: int = 0, u=None) -> SlopeEstimate:
    """One-sided slope of ``AUC(theta, theta + s d)`` in ``d``, quotient ``(AUC - 1/2)/(s d)``.

    Only the likelihood enters.  Steps are in units of ``1/sqrt(F(theta))``.
    The analytic backend differentiates ``1/2 + erf(d_a/2)/2`` with the
    detectability ``d_a``; the Monte Carlo backend uses common random numbers
    across steps and Mann-Whitney areas.
    """
    sign = _sign(side)
    steps = _check_steps(steps)
    if model.is_vector:
        u = _unit(u, model.param_dim)
        theta = np.asarray(theta, dtype=float)
    else:
        theta = float(theta)
        model.check_in_support(theta)
    info = _cond_info_at(model, theta, u)
    if info <= 0:
        raise UnsupportedError("AUC slope undefined where the Fisher information vanishes")
    scale = 1.0 / math.sqrt(info)
    deltas = steps * scale

    def moved(d):
        return theta + sign * d * u if model.is_vector else theta + sign * d

    if backend == "analytic":
        if model.is_vector:
            cf = model.params.cond_fim if isinstance(model.params, GaussianImagingModel) else None
            if cf is None:
                raise UnsupportedError("analytic AUC needs the Gaussian imaging model")
            da = deltas * math.sqrt(float(u @ cf @ u))
        else:
            da = deltas * math.sqrt(_conditional_info(model))
        aucs = 0.5 + 0.5 * erf(da / 2.0)
        q = (aucs - 0.5) / (sign * deltas)
        q_se = np.zeros_like(q)
        r_se = 0.0
        diff_se = np.zeros(len(q) - 1)
    elif backend == "monte_carlo":
        def batch(t, k):
            return np.broadcast_to(t, (k, model.param_dim)).copy() if model.is_vector else np.full(k, t)

        def draw(rng, k):
            g0 = model.sample_cond(rng, batch(theta, k))
            state = rng.bit_generator.state
            x0, x1 = [], []
            for d in deltas:
                rng.bit_generator.state = state
                t1 = moved(d)
                g1 = model.sample_cond(rng, batch(t1, k))
                x0.append(log_likelihood_ratio(model, g0, theta, t1))
                x1.append(log_likelihood_ratio(model, g1, theta, t1))
            return np.column_stack(x0), np.column_stack(x1)

        x0, x1 = _mc.collect(draw, n_samples, seed)

        def quotients(a, b):
            au = np.array([auc_mann_whitney(a[:, j], b[:, j])[0] for j in range(len(deltas))])
            qq = (au - 0.5) / (sign * deltas)
            return np.append(qq, _richardson(qq[-2], qq[-1], deltas[-2], deltas[-1]))

        full, se = _mc.jackknife(quotients, x0, x1)
        q, q_se, r_se = full[:-1], se[:-1], float(se[-1])
        diff_se = np.hypot(q_se[1:], q_se[:-1])
        aucs = 0.5 + sign * deltas * q
    else:
        raise ValueError(f"unknown backend {backend!r}")

    extrap = float(_richardson(q[-2], q[-1], deltas[-2], deltas[-1]))
    flags = ["nonmonotone_quotients"] if _monotone_flag(np.diff(q), diff_se) else []
    return SlopeEstimate(side, float(q[-1]), steps.tolist(), extrap, r_se, np.asarray(q).tolist(),
                         np.asarray(q_se).tolist(), flags,
                         {"backend": backend, "scale": scale, "aucs": np.asarray(aucs).tolist(), "fisher": info})


def auc_fi_slope_check(model: Model, theta, side: str = "plus", steps=DEFAULT_STEPS, backend: str = "analytic",
                       n_samples: int = DEFAULT_SAMPLES, seed: int = 0, u=None) -> BoundReport:
    """``|AUC slope| == sqrt(F(theta)) / (2 sqrt(pi))``."""
    name = "auc_fi_slope"
    s = auc_slope(model, theta, side, steps, backend, n_samples, _mc.derive_seed(seed, name, side), u)
    rhs = math.sqrt(s.details["fisher"]) / (2.0 * math.sqrt(math.pi))
    lhs = abs(s.extrapolated)
    return BoundReport(
        name, lhs, rhs, s.std_error, 0.0, "eq", atol=s.truncation, flags=list(s.flags),
        config_hash=config_hash(name, model, theta=_plain(np.asarray(theta, dtype=float)), side=side,
                                steps=list(steps), backend=backend, n_samples=n_samples, seed=seed,
                                u=None if u is None else list(np.ravel(u))),
        details={"slope": s.to_record(), "relative_error": abs(lhs - rhs) / rhs,
                 "finest_relative_error": abs(abs(s.value) - rhs) / rhs},
    )
