"""Ideal observer for detecting a change of parameter.

Hypothesis H0 says ``g ~ pr(g|theta0)``, H1 says ``g ~ pr(g|theta1)``.  The
ideal observer thresholds the likelihood ratio ``Lambda = pr(g|theta1) /
pr(g|theta0)``; with prior weights from the parameter prior, the Bayes
threshold is ``y = pr(theta0) / pr(theta1)`` and the decision is equivalently
``t > 1`` for the posterior ratio ``t = pr(theta1|g) / pr(theta0|g)``.  Ties
at the threshold go to H0.

All statistics are handled on the log scale.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf, erfinv, expit, ndtr
from scipy.stats import rankdata

from . import _mc
from .errors import (
    NegativeInformationError,
    SaturationError,
    StratificationError,
    UndefinedHypothesesError,
    UnsupportedError,
)
from .models import GaussianImagingModel, GaussianScalarSignalModel, Model, posterior_density

DEFAULT_SAMPLES = 100_000
ROC_THRESHOLDS = 512
# AUC closer to one than this cannot be turned into a detectability (d > ~5.3).
SATURATION_GAP = 1e-4


# --------------------------------------------------------------------------
# Helpers on single parameter points
# --------------------------------------------------------------------------


def _point(model: Model, theta):
    if model.is_vector:
        return np.asarray(theta, dtype=float).reshape(model.param_dim)
    return float(theta)


def _batch(model: Model, theta, k: int) -> np.ndarray:
    if model.is_vector:
        return np.broadcast_to(_point(model, theta), (k, model.param_dim)).copy()
    return np.full(k, _point(model, theta))


def log_prior_at(model: Model, theta) -> float:
    with np.errstate(divide="ignore"):
        return float(model.log_prior(_batch(model, theta, 1))[0])


def log_likelihood_ratio(model: Model, g: np.ndarray, theta0, theta1) -> np.ndarray:
    """ln pr(g|theta1) - ln pr(g|theta0), row by row."""
    g = np.atleast_2d(g)
    k = g.shape[0]
    return model.log_cond(g, _batch(model, theta1, k)) - model.log_cond(g, _batch(model, theta0, k))


# --------------------------------------------------------------------------
# Test statistics
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class TestStatistic:
    """Likelihood ratio or posterior ratio for one hypothesis pair.

    The posterior ratio is evaluated from the posterior density itself
    (closed form or grid), not from the likelihood ratio.
    """

    __test__ = False  # not a pytest class

    model: Model
    theta0: object
    theta1: object
    kind: str = "likelihood_ratio"

    def __post_init__(self):
        if self.kind not in ("likelihood_ratio", "posterior_ratio"):
            raise ValueError(f"unknown statistic kind {self.kind!r}")

    def log_evaluate(self, g) -> np.ndarray:
        g = np.atleast_2d(np.asarray(g, dtype=float))
        if self.kind == "likelihood_ratio":
            return log_likelihood_ratio(self.model, g, self.theta0, self.theta1)
        out = np.empty(g.shape[0])
        t0 = _batch(self.model, self.theta0, 1)
        t1 = _batch(self.model, self.theta1, 1)
        if not self.model.is_vector:
            t0, t1 = t0[0], t1[0]
        for i, row in enumerate(g):
            post = posterior_density(self.model, row)
            out[i] = np.ravel(post.logpdf(t1))[0] - np.ravel(post.logpdf(t0))[0]
        return out

    def evaluate(self, g) -> np.ndarray:
        return np.exp(self.log_evaluate(g))

    def decide(self, g) -> np.ndarray:
        """True where the observer declares H1."""
        logs = self.log_evaluate(g)
        if self.kind == "posterior_ratio":
            return logs > 0.0
        return logs > math.log(optimal_threshold(self.model, self.theta0, self.theta1))


# --------------------------------------------------------------------------
# Hypothesis weights and threshold
# --------------------------------------------------------------------------


def hypothesis_priors(model: Model, theta0, theta1) -> tuple[float, float]:
    """(Pr0, Pr1) from the prior densities at the two parameter values."""
    if getattr(model, "flat_prior", False):
        return 0.5, 0.5
    lp0, lp1 = log_prior_at(model, theta0), log_prior_at(model, theta1)
    if lp0 == -math.inf and lp1 == -math.inf:
        raise UndefinedHypothesesError("prior density vanishes at both hypotheses")
    diff = lp0 - lp1
    pr0 = float(expit(diff))
    return pr0, 1.0 - pr0


def optimal_threshold(model: Model, theta0, theta1) -> float:
    """Bayes threshold y = pr(theta0)/pr(theta1) on the likelihood ratio.

    Returns ``inf`` when ``pr(theta1) = 0``: the observer always declares H0.
    """
    if getattr(model, "flat_prior", False):
        return 1.0
    lp0, lp1 = log_prior_at(model, theta0), log_prior_at(model, theta1)
    if lp0 == -math.inf and lp1 == -math.inf:
        raise UndefinedHypothesesError("prior density vanishes at both hypotheses")
    if lp1 == -math.inf:
        return math.inf
    return math.exp(lp0 - lp1)


def _log_prior_ratio(model: Model, theta0, theta1) -> float:
    """ln y = ln pr(theta0) - ln pr(theta1)."""
    if getattr(model, "flat_prior", False):
        return 0.0
    lp0, lp1 = log_prior_at(model, theta0), log_prior_at(model, theta1)
    if lp0 == -math.inf and lp1 == -math.inf:
        raise UndefinedHypothesesError("prior density vanishes at both hypotheses")
    if lp1 == -math.inf:
        return math.inf
    if lp0 == -math.inf:
        return -math.inf
    return lp0 - lp1


# --------------------------------------------------------------------------
# ROC and AUC
# --------------------------------------------------------------------------


@dataclass
class RocCurve:
    """Operating points ``(y, FPF, TPF)`` ordered by increasing threshold ``y``."""

    points: np.ndarray
    auc: float
    auc_se: float = 0.0
    degenerate: bool = False
    n0: int = 0
    n1: int = 0

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["threshold", "FPF", "TPF"])
        for y, fpf, tpf in self.points:
            w.writerow([repr(float(y)), repr(float(fpf)), repr(float(tpf))])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
        return text

    def to_record(self) -> dict:
        return {"quantity": "auc", "method": "monte_carlo", "value": self.auc, "std_error": self.auc_se,
                "samples": self.n0 + self.n1, "degenerate": self.degenerate}


def auc_mann_whitney(x0: np.ndarray, x1: np.ndarray) -> tuple[float, float]:
    """Rank AUC, P(x1 > x0) + P(x1 = x0)/2, with its DeLong standard error."""
    x0 = np.asarray(x0, dtype=float)
    x1 = np.asarray(x1, dtype=float)
    n0, n1 = len(x0), len(x1)
    ranks = rankdata(np.concatenate([x0, x1]))
    r0, r1 = ranks[:n0], ranks[n0:]
    auc = (r1.sum() - n1 * (n1 + 1) / 2) / (n0 * n1)
    v10 = (r1 - rankdata(x1)) / n0
    v01 = 1.0 - (r0 - rankdata(x0)) / n1
    se = math.sqrt(np.var(v10, ddof=1) / n1 + np.var(v01, ddof=1) / n0) if min(n0, n1) > 1 else math.nan
    return float(auc), se


def empirical_roc(x0: np.ndarray, x1: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Full empirical ROC: (FPF, TPF) at every distinct observed value, (0,0) to (1,1)."""
    x0 = np.sort(np.asarray(x0, dtype=float))
    x1 = np.sort(np.asarray(x1, dtype=float))
    cuts = np.unique(np.concatenate([x0, x1]))[::-1]
    fpf = (len(x0) - np.searchsorted(x0, cuts, side="left")) / len(x0)
    tpf = (len(x1) - np.searchsorted(x1, cuts, side="left")) / len(x1)
    return np.concatenate([[0.0], fpf]), np.concatenate([[0.0], tpf])


def roc_area(fpf: np.ndarray, tpf: np.ndarray) -> float:
    return float(np.trapezoid(tpf, fpf))


def roc_and_auc(model: Model, theta0, theta1, n_samples: int = DEFAULT_SAMPLES, seed: int = 0,
                diagnostic: bool = False, n_thresholds: int = ROC_THRESHOLDS, jobs: int = 1) -> RocCurve:
    """Simulated ideal-observer ROC and rank AUC for H0: theta0 vs H1: theta1.

    ``n_samples`` data vectors are drawn under each hypothesis.  Equal
    hypotheses are refused unless ``diagnostic`` is set.
    """
    if n_samples < 2:
        raise ValueError("n_samples must be at least 2")
    if not diagnostic and np.array_equal(np.asarray(theta0), np.asarray(theta1)):
        raise ValueError("theta0 == theta1; pass diagnostic=True to simulate identical hypotheses")

    def draw(rng, k):
        g0 = model.sample_cond(rng, _batch(model, theta0, k))
        g1 = model.sample_cond(rng, _batch(model, theta1, k))
        return (log_likelihood_ratio(model, g0, theta0, theta1),
                log_likelihood_ratio(model, g1, theta0, theta1))

    x0, x1 = _mc.collect(draw, n_samples, seed, jobs)
    lo = min(x0.min(), x1.min())
    hi = max(x0.max(), x1.max())
    if lo == hi:
        warnings.warn("test statistic is constant; AUC set to 1/2", RuntimeWarning, stacklevel=2)
        pts = np.array([[math.exp(lo), 0.0, 0.0]])
        return RocCurve(pts, 0.5, 0.0, True, n_samples, n_samples)
    auc, se = auc_mann_whitney(x0, x1)
    log_y = np.linspace(lo, hi, n_thresholds)
    s0, s1 = np.sort(x0), np.sort(x1)
    fpf = 1.0 - np.searchsorted(s0, log_y, side="right") / len(s0)
    tpf = 1.0 - np.searchsorted(s1, log_y, side="right") / len(s1)
    with np.errstate(over="ignore"):
        pts = np.column_stack([np.exp(log_y), fpf, tpf])
    return RocCurve(pts, auc, se, False, n_samples, n_samples)


def auc_from_detectability(d):
    return 0.5 + 0.5 * erf(np.asarray(d, dtype=float) / 2.0)


def detectability_from_auc(auc: float) -> float:
    """d = 2 erfinv(2 AUC - 1).

    Raises
    ------
    NegativeInformationError
        AUC below 1/2.
    SaturationError
        AUC within ``SATURATION_GAP`` of one.
    """
    if auc < 0.5:
        raise NegativeInformationError(f"AUC {auc} < 0.5; swap the hypothesis labels")
    if 1.0 - auc < SATURATION_GAP:
        raise SaturationError(f"AUC {auc} too close to 1 to resolve the detectability")
    return float(2.0 * erfinv(2.0 * auc - 1.0))


# --------------------------------------------------------------------------
# Closed forms for Gaussian log-likelihood ratios
# --------------------------------------------------------------------------


def gaussian_separation(model: Model, theta0, theta1) -> float:
    """Ideal-observer detectability d for models with Gaussian log-likelihood ratio.

    Supported: the scalar Gaussian-signal model, the imaging model, and models
    whose data do not depend on the parameter (d = 0).
    """
    p = model.params
    if isinstance(p, GaussianScalarSignalModel):
        return abs(float(theta1) - float(theta0)) * math.sqrt(p.signal_info)
    if isinstance(p, GaussianImagingModel):
        delta = np.asarray(theta1, dtype=float) - np.asarray(theta0, dtype=float)
        return math.sqrt(float(delta @ p.cond_fim @ delta))
    if model.name in ("flat-likelihood", "exponential-prior"):
        return 0.0
    raise UnsupportedError(f"no closed-form likelihood-ratio law for model {model.name!r}")


def auc_gaussian(model: Model, theta0, theta1) -> float:
    return float(auc_from_detectability(gaussian_separation(model, theta0, theta1)))


def pe_gaussian(pr0, log_y, delta):
    """Bayes error when ln Lambda ~ N(-+delta^2/2, delta^2) under H0/H1.

    Vectorized over all three arguments.  ``delta = 0`` means Lambda = 1, where
    the observer says H1 only if ``ln y < 0``.
    """
    pr0 = np.asarray(pr0, dtype=float)
    log_y = np.asarray(log_y, dtype=float)
    delta = np.asarray(delta, dtype=float)
    pr1 = 1.0 - pr0
    with np.errstate(divide="ignore", invalid="ignore"):
        fp = ndtr((-log_y - delta**2 / 2) / delta)
        fn = ndtr((log_y - delta**2 / 2) / delta)
    fp = np.where(delta > 0, fp, (log_y < 0).astype(float))
    fn = np.where(delta > 0, fn, (log_y >= 0).astype(float))
    # Zero-weight terms must not turn into nan through 0 * nan.
    return np.where(pr0 > 0, pr0 * fp, 0.0) + np.where(pr1 > 0, pr1 * fn, 0.0)


@dataclass
class MpeEstimate:
    value: float
    std_error: float
    pr0: float
    pr1: float
    threshold: float
    n0: int = 0
    n1: int = 0
    method: str = "monte_carlo"
    details: dict = field(default_factory=dict)

    def to_record(self) -> dict:
        return {"quantity": "mpe", "method": self.method, "value": self.value, "std_error": self.std_error,
                "samples": self.n0 + self.n1, "pr0": self.pr0, "pr1": self.pr1,
                "threshold": self.threshold if math.isfinite(self.threshold) else None}


def mpe_analytic_gaussian(model: Model, theta0, theta1) -> MpeEstimate:
    """Minimum probability of error in closed form (normal CDF, prior-shifted threshold)."""
    delta = gaussian_separation(model, theta0, theta1)
    pr0, pr1 = hypothesis_priors(model, theta0, theta1)
    log_y = _log_prior_ratio(model, theta0, theta1)
    value = float(pe_gaussian(pr0, log_y, delta))
    return MpeEstimate(value, 0.0, pr0, pr1, math.exp(log_y) if log_y < 700 else math.inf, method="analytic",
                       details={"detectability": delta})


# --------------------------------------------------------------------------
# Monte Carlo MPE
# --------------------------------------------------------------------------


def mpe(model: Model, theta0, theta1, n_samples: int = DEFAULT_SAMPLES, seed: int = 0,
        diagnostic: bool = False, jobs: int = 1) -> MpeEstimate:
    """Stratified simulation of the ideal observer at the Bayes threshold.

    ``round(Pr0 n)`` data vectors are drawn under H0 and the rest under H1;
    the error fractions are weighted by (Pr0, Pr1).  A hypothesis with zero
    prior weight gives an exact zero error without sampling.
    """
    if not diagnostic and np.array_equal(np.asarray(theta0), np.asarray(theta1)):
        raise ValueError("theta0 == theta1; pass diagnostic=True to simulate identical hypotheses")
    pr0, pr1 = hypothesis_priors(model, theta0, theta1)
    log_y = _log_prior_ratio(model, theta0, theta1)
    y = math.exp(log_y) if log_y < 700 else math.inf
    if pr0 == 0.0 or pr1 == 0.0:
        return MpeEstimate(0.0, 0.0, pr0, pr1, y, method="degenerate")
    n0 = int(round(pr0 * n_samples))
    n1 = n_samples - n0
    if n0 == 0 or n1 == 0:
        raise StratificationError(f"n_samples={n_samples} leaves an empty stratum (n0={n0}, n1={n1})")

    def stratum(theta, wrong_if_h1: bool):
        def draw(rng, k):
            g = model.sample_cond(rng, _batch(model, theta, k))
            log_t = log_likelihood_ratio(model, g, theta0, theta1) - log_y
            says_h1 = log_t > 0.0
            return says_h1 if wrong_if_h1 else ~says_h1
        return draw

    fp = float(_mc.collect(stratum(theta0, True), n0, _mc.derive_seed(seed, "H0"), jobs).mean())
    fn = float(_mc.collect(stratum(theta1, False), n1, _mc.derive_seed(seed, "H1"), jobs).mean())
    value = pr0 * fp + pr1 * fn
    se = math.sqrt(pr0**2 * fp * (1 - fp) / n0 + pr1**2 * fn * (1 - fn) / n1)
    return MpeEstimate(value, se, pr0, pr1, y, n0, n1, details={"fpf": fp, "fnf": fn})


def pe_step_integrand(model: Model, theta, theta_tilde, g) -> np.ndarray:
    """Per-sample Pr0 * min(t, 1) with ``g ~ pr(g|theta)``.

    Its expectation over ``g`` is P_e(theta, theta_tilde): rewriting the H1
    error through the change of measure pr1(t) = (pr(theta)/pr(theta~)) t pr0(t)
    leaves a single expectation under H0.  Arrays are row-aligned.
    """
    with np.errstate(divide="ignore"):
        lp0 = model.log_prior(theta)
        lp1 = model.log_prior(theta_tilde)
    log_t = (lp1 - lp0) + model.log_cond(g, theta_tilde) - model.log_cond(g, theta)
    log_t = np.where(lp1 == -np.inf, -np.inf, log_t)
    pr0 = expit(lp0 - lp1)
    return pr0 * np.exp(np.minimum(log_t, 0.0))
