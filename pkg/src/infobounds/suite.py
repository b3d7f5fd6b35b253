"""End-to-end reproduction of the closed-form constants and every bound check.

:func:`reproduce` runs a fixed list of checks, each producing a
:class:`~infobounds.bounds.BoundReport`, and collects them in a
:class:`SuiteReport`.  Every check draws from its own seed stream derived
from the base seed and the check name, so adding or removing a check never
shifts another check's random numbers.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import _mc
from .bounds import (
    HOLDS,
    INCONCLUSIVE,
    VIOLATED,
    BoundReport,
    _plain,
    auc_fi_slope_check,
    config_hash,
    emse,
    schwarz_bound_check,
    slope_tv_identity_check,
    van_trees_check,
    vector_slope_check,
    ziv_zakai_check,
    ziv_zakai_rhs,
)
from .fisher import (
    bayesian_fi_posterior_form,
    bayesian_fi_prior_form,
    bayesian_fi_var_tprime,
    family_fisher_information,
)
from .models import (
    Exponential,
    Normal,
    make_exponential_prior_model,
    make_flat_likelihood_model,
    make_gaussian_imaging_model,
    make_gaussian_scalar_model,
)
from .observer import hypothesis_priors, log_likelihood_ratio, mpe
from .tv import tv_analytic, tv_average, tv_directional, tv_grid

SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)
NORMAL_SDS = (0.5, 1.0, 3.0)
EXPONENTIAL_RATES = (0.5, 1.0, 2.0)
COVARIANCE_SCALES = (0.25, 0.5, 1.0, 2.0, 4.0)
DIRECTIONS = {
    "e1": np.array([1.0, 0.0]),
    "e2": np.array([0.0, 1.0]),
    "diag": np.array([1.0, 1.0]) / math.sqrt(2.0),
}
SLOPE_SAMPLE_FACTOR = 10
EXACT_ATOL = 1e-6
GRID_ATOL = 1e-5


@dataclass
class SuiteReport:
    entries: list = field(default_factory=list)
    seeds: dict = field(default_factory=dict)
    settings: dict = field(default_factory=dict)
    wall_clock: Optional[float] = None

    @property
    def verdict(self) -> str:
        verdicts = {e.verdict for e in self.entries}
        if VIOLATED in verdicts:
            return VIOLATED
        if INCONCLUSIVE in verdicts:
            return INCONCLUSIVE
        return HOLDS

    def counts(self) -> dict:
        out = {HOLDS: 0, INCONCLUSIVE: 0, VIOLATED: 0}
        for e in self.entries:
            out[e.verdict] += 1
        return out

    def to_records(self) -> list:
        return [e.to_record() for e in self.entries]

    def summary_record(self, timing: bool = False) -> dict:
        rec = {"quantity": "suite", "verdict": self.verdict, "counts": self.counts(),
               "settings": self.settings, "seeds": self.seeds}
        if timing and self.wall_clock is not None:
            rec["wall_clock_s"] = self.wall_clock
        return _plain(rec)

    def to_json_lines(self, timing: bool = False) -> str:
        lines = [json.dumps(r, sort_keys=True) for r in self.to_records()]
        lines.append(json.dumps(self.summary_record(timing), sort_keys=True))
        return "\n".join(lines) + "\n"

    def to_markdown(self) -> str:
        head = ["| # | check | topic | lhs | rhs | ratio | verdict |", "|---|---|---|---|---|---|---|"]
        rows = []
        for i, e in enumerate(self.entries, 1):
            topic = e.details.get("topic", "")
            rows.append(f"| {i} | {e.name} | {topic} | {fmt(e.lhs)} | {fmt(e.rhs)} | {fmt(e.ratio)} | {e.verdict} |")
        c = self.counts()
        tail = ["", f"overall: {self.verdict} ({c[HOLDS]} holds, {c[INCONCLUSIVE]} inconclusive, "
                f"{c[VIOLATED]} violated)"]
        return "\n".join(head + rows + tail) + "\n"


def fmt(x) -> str:
    """Six significant digits, trailing zeros kept."""
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return f"{float(x):#.6g}"


def _tag(report: BoundReport, name: str, topic: str) -> BoundReport:
    report.name = name
    report.details = dict(report.details, topic=topic)
    return report


def _exact(name: str, topic: str, value: float, expected: float, atol: float = EXACT_ATOL, se: float = 0.0,
           relation: str = "eq", **details) -> BoundReport:
    return BoundReport(name, float(value), float(expected), se, 0.0, relation, atol=atol,
                       config_hash=config_hash(name, expected=expected, atol=atol),
                       details=dict(details, topic=topic))


# --------------------------------------------------------------------------
# Check groups
# --------------------------------------------------------------------------


def _family_ratios() -> list:
    out = []
    for sd in NORMAL_SDS:
        fam = Normal(0.0, sd)
        ratio = tv_analytic(fam).value / math.sqrt(family_fisher_information(fam))
        out.append(_exact(f"normal_tv_ratio[sd={sd:g}]", "normal posterior", ratio, SQRT_2_OVER_PI))
    for rate in EXPONENTIAL_RATES:
        fam = Exponential(rate)
        ratio = tv_analytic(fam).value / math.sqrt(family_fisher_information(fam))
        out.append(_exact(f"exponential_tv_ratio[rate={rate:g}]", "sharp case", ratio, 1.0, atol=1e-12))
    return out


def _grid_checks() -> list:
    out = []
    for fam, label in ((Normal(0.0, 1.0), "normal"), (Exponential(2.0), "exponential")):
        g = tv_grid(fam)
        exact = tv_analytic(fam).value
        sums = np.array([s for _, s in g.refinement])
        drops = int(np.sum(np.diff(sums) < -1e-15 * sums.max()))
        out.append(_exact(f"grid_tv_monotone[{label}]", "discretized TV", drops, 0, atol=0.0,
                          trace=g.refinement))
        out.append(_exact(f"grid_tv_agreement[{label}]", "discretized TV", g.value, exact, atol=GRID_ATOL,
                          grid_nodes=g.grid_nodes, converged=g.converged))
    return out


def _scalar_model_checks(n: int, seed) -> list:
    m = make_gaussian_scalar_model([1.0, 0.0], np.eye(2))
    s, k = np.array([1.0, 0.0]), np.eye(2)
    info = float(s @ np.linalg.solve(k, s)) + 1.0  # oracle, independent of the model code
    topic = "scalar Gaussian model"
    out = [
        _exact("bayesian_fi[analytic]", topic, m.bayes_fi, info, atol=1e-12),
        _exact("posterior_variance", topic, m.params.posterior_variance, 1.0 / info, atol=1e-12),
        _exact("average_tv[analytic]", topic, math.sqrt(2.0 * info / math.pi),
               tv_analytic(m.posterior(np.zeros(2))).value, atol=1e-12),
    ]
    for label, fn in (("prior_form", bayesian_fi_prior_form), ("posterior_form", bayesian_fi_posterior_form)):
        r = fn(m, n, _mc.derive_seed(seed, label), method="monte_carlo")
        out.append(_exact(f"bayesian_fi[{label}]", topic, r.value, info, atol=0.0, se=r.std_error))
    r = bayesian_fi_var_tprime(m, n, _mc.derive_seed(seed, "var_tprime"))
    out.append(_exact("bayesian_fi[var_tprime]", topic, r.value, info, atol=0.0, se=r.std_error))
    out.append(_exact("mean_tprime", "score properties", r.details["mean"], 0.0, atol=0.0,
                      se=r.details["mean_se"]))
    tv = tv_average(m, min(n, 20_000), seed=_mc.derive_seed(seed, "tv_average"))
    out.append(_exact("average_tv[abs_tprime]", topic, tv.details["abs_tprime"], math.sqrt(2 * info / math.pi),
                      atol=0.0, se=tv.details["abs_tprime_se"]))
    return out


def _exponential_score_checks(n: int, seed) -> list:
    e = make_exponential_prior_model(2.0)
    r = bayesian_fi_var_tprime(e, n, _mc.derive_seed(seed, "exp_tprime"))
    topic = "boundary prior"
    return [
        _exact("exponential_tprime_second_moment", topic, r.details["second_moment"], 4.0, atol=1e-12,
               se=r.details["second_moment_se"]),
        _exact("exponential_tprime_mean", topic, r.details["mean"], -2.0, atol=1e-12, se=r.details["mean_se"],
               note="prior mass at the support boundary: the score mean is -rate, not zero"),
    ]


def _imaging_checks() -> list:
    im = make_gaussian_imaging_model([[1.0, 0.0]], [[1.0]], np.eye(2))
    expected = np.diag([2.0, 1.0])
    err = float(np.abs(im.params.posterior_precision - expected).max())
    out = [_exact("imaging_posterior_precision", "imaging model", err, 0.0, atol=1e-12)]
    for label, u in DIRECTIONS.items():
        tv = tv_directional(im.posterior(np.zeros(1)), u).value
        ratio = tv / math.sqrt(float(u @ im.bayes_fim @ u))
        out.append(_exact(f"directional_tv_ratio[{label}]", "imaging model", ratio, SQRT_2_OVER_PI))
    return out


def _slope_checks(n_slope: int, seed, jobs: int) -> list:
    g = make_gaussian_scalar_model([1.0, 0.0], np.eye(2))
    flat = make_flat_likelihood_model()
    e = make_exponential_prior_model(2.0)
    im = make_gaussian_imaging_model([[1.0, 0.0]], [[1.0]], np.eye(2))
    out = []
    for model, label in ((g, "gaussian"), (flat, "flat-likelihood"), (e, "exponential")):
        sd = _mc.derive_seed(seed, "slope", label)
        out.append(_tag(slope_tv_identity_check(model, n_samples=n_slope, seed=sd, jobs=jobs),
                        f"slope_tv_identity[{label}]", "slope identity"))
        out.append(_tag(schwarz_bound_check(model, n_samples=n_slope, seed=sd, jobs=jobs),
                        f"schwarz[{label}]", "Schwarz bound"))
    out.append(_tag(schwarz_bound_check(e, backend="analytic"), "schwarz[exponential,analytic]", "sharp case"))
    out.append(_tag(schwarz_bound_check(g, backend="analytic"), "schwarz[gaussian,analytic]", "Schwarz bound"))
    for label, u in DIRECTIONS.items():
        sd = _mc.derive_seed(seed, "vector_slope", label)
        out.append(_tag(slope_tv_identity_check(im, n_samples=n_slope, seed=sd, u=u, jobs=jobs),
                        f"slope_tv_identity[imaging,{label}]", "directional slope"))
        out.append(_tag(vector_slope_check(im, u, n_samples=n_slope, seed=sd, jobs=jobs),
                        f"vector_slope[imaging,{label}]", "directional slope"))
    return out


def _van_trees_checks(n: int, seed, jobs: int) -> list:
    g = make_gaussian_scalar_model([1.0, 0.0], np.eye(2))
    flat = make_flat_likelihood_model()
    out = []
    r = van_trees_check(g, "posterior_mean", n, _mc.derive_seed(seed, "vt_pm"), jobs)
    out.append(_tag(r, "van_trees[posterior_mean]", "van Trees"))
    eq = BoundReport("van_trees_equality[posterior_mean]", r.lhs, r.rhs, r.lhs_se, r.rhs_se, "eq",
                     config_hash=r.config_hash, details={"topic": "van Trees"})
    out.append(eq)
    r = van_trees_check(g, "ml_linear", n, _mc.derive_seed(seed, "vt_ml"), jobs)
    out.append(_tag(r, "van_trees[ml_linear]", "van Trees"))
    out.append(BoundReport("van_trees_gap[ml_linear]", r.slack, 0.5, r.std_error, 0.0, "eq",
                           config_hash=r.config_hash, details={"topic": "van Trees"}))
    r = van_trees_check(flat, "posterior_mean", n, _mc.derive_seed(seed, "vt_flat"), jobs)
    out.append(_tag(r, "van_trees[flat-likelihood]", "van Trees"))
    return out


def _ziv_zakai_checks() -> list:
    out = []
    for c in COVARIANCE_SCALES:
        m = make_gaussian_scalar_model([1.0, 0.0], c * np.eye(2))
        out.append(_tag(ziv_zakai_check(m), f"ziv_zakai[gaussian,c={c:g}]", "Ziv-Zakai"))
    for model, label in ((make_exponential_prior_model(2.0), "exponential"),
                         (make_flat_likelihood_model(), "flat-likelihood")):
        out.append(_tag(ziv_zakai_check(model), f"ziv_zakai[{label}]", "Ziv-Zakai"))
    g = make_gaussian_scalar_model([1.0, 0.0], np.eye(2))
    fwd = ziv_zakai_rhs(g, order="forward").value
    rev = ziv_zakai_rhs(g, order="swapped").value
    out.append(_exact("ziv_zakai_symmetry", "Ziv-Zakai", fwd, rev, atol=1e-12))
    return out


def _auc_checks() -> list:
    g = make_gaussian_scalar_model([1.0, 0.0], np.eye(2))
    im = make_gaussian_imaging_model([[1.0, 0.0]], [[1.0]], np.eye(2))
    out = []
    for side in ("plus", "minus"):
        out.append(_tag(auc_fi_slope_check(g, 0.0, side), f"auc_fi_slope[{side}]", "AUC slope"))
    u = DIRECTIONS["diag"]
    out.append(_tag(auc_fi_slope_check(im, np.zeros(2), "plus", u=u), "auc_fi_slope[imaging,diag]", "AUC slope"))
    return out


def _observer_checks(n: int, seed, jobs: int) -> list:
    g = make_gaussian_scalar_model([1.0, 0.0], np.eye(2))
    theta0, theta1 = 0.0, 0.7
    pr0, pr1 = hypothesis_priors(g, theta0, theta1)
    log_y = math.log(pr0 / pr1)

    # change of measure: E_1[h(g)] = E_0[Lambda h(g)] for h = 1{Lambda < y}
    def draw(rng, k):
        g0 = g.sample_cond(rng, np.full(k, theta0))
        g1 = g.sample_cond(rng, np.full(k, theta1))
        l0 = log_likelihood_ratio(g, g0, theta0, theta1)
        l1 = log_likelihood_ratio(g, g1, theta0, theta1)
        return (l1 < log_y).astype(float), np.exp(l0) * (l0 < log_y)

    a, b = _mc.collect(draw, n, _mc.derive_seed(seed, "change_of_measure"), jobs)
    ma, sa = _mc.mean_and_se(a)
    mb, sb = _mc.mean_and_se(b)
    out = [BoundReport("change_of_measure", ma, mb, sa, sb, "eq",
                       config_hash=config_hash("change_of_measure", g, n=n), details={"topic": "score properties"})]
    est = mpe(g, theta0, theta1, n, _mc.derive_seed(seed, "mpe"), jobs=jobs)
    out.append(BoundReport("mpe_below_min_prior", est.value, min(pr0, pr1), est.std_error, 0.0, "le",
                           config_hash=config_hash("mpe_below_min_prior", g, n=n),
                           details={"topic": "minimum probability of error"}))
    return out


def _emse_checks(n: int, seed, jobs: int) -> list:
    g = make_gaussian_scalar_model([1.0, 0.0], np.eye(2))
    out = []
    for est, expected in (("posterior_mean", 0.5), ("ml_linear", 1.0), ("prior_mean", 1.0)):
        r = emse(g, est, n, _mc.derive_seed(seed, "emse", est), jobs)
        out.append(_exact(f"emse[{est}]", "EMSE", r.value, expected, atol=0.0, se=r.std_error))
    return out


def reproduce(seed: int = 0, samples: int = 100_000, jobs: int = 1, sigmas: Optional[float] = None,
              progress: Optional[Callable[[str], None]] = None) -> SuiteReport:
    """Run the whole suite.

    ``samples`` sets the Monte Carlo budget per estimate; slope checks use ten
    times as many joint draws.
    """
    t0 = time.perf_counter()
    n = int(samples)
    n_slope = SLOPE_SAMPLE_FACTOR * n
    groups = [
        ("families", lambda sd: _family_ratios()),
        ("grid", lambda sd: _grid_checks()),
        ("scalar_model", lambda sd: _scalar_model_checks(n, sd)),
        ("boundary_prior", lambda sd: _exponential_score_checks(n, sd)),
        ("imaging", lambda sd: _imaging_checks()),
        ("emse", lambda sd: _emse_checks(n, sd, jobs)),
        ("van_trees", lambda sd: _van_trees_checks(n, sd, jobs)),
        ("ziv_zakai", lambda sd: _ziv_zakai_checks()),
        ("auc_slope", lambda sd: _auc_checks()),
        ("observer", lambda sd: _observer_checks(n, sd, jobs)),
        ("slopes", lambda sd: _slope_checks(n_slope, sd, jobs)),
    ]
    report = SuiteReport(settings={"seed": seed, "samples": n, "slope_samples": n_slope})
    for name, run in groups:
        sd = _mc.derive_seed(seed, name)
        report.seeds[name] = list(sd)
        if progress is not None:
            progress(name)
        entries = run(sd)
        if sigmas is not None:
            for e in entries:
                e.rejudge(sigmas)
        report.entries.extend(entries)
    report.wall_clock = time.perf_counter() - t0
    return report
