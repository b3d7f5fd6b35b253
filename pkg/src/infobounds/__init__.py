"""Fisher information, ideal-observer performance and posterior total variation.

Estimators for classical and Bayesian Fisher information, the ideal
observer's ROC, AUC and minimum probability of error, posterior total
variation, and numerical checks of the bounds that connect them.
"""

from .bounds import (
    BoundReport,
    SlopeEstimate,
    auc_fi_slope_check,
    auc_slope,
    emse,
    mpe_slope,
    schwarz_bound_check,
    slope_tv_identity_check,
    van_trees_check,
    vector_slope_check,
    ziv_zakai_check,
    ziv_zakai_rhs,
)
from .config import ExperimentConfig, load_model
from .errors import InfoBoundsError
from .fisher import (
    FisherResult,
    bayesian_fi_posterior_form,
    bayesian_fi_prior_form,
    bayesian_fi_var_tprime,
    bayesian_fim,
    fisher_information,
    fisher_matrix,
)
from .models import (
    Exponential,
    GridDensity,
    MultivariateNormal,
    Normal,
    ScalarModel,
    VectorModel,
    make_exponential_prior_model,
    make_flat_likelihood_model,
    make_gaussian_imaging_model,
    make_gaussian_location_model,
    make_gaussian_scalar_model,
    posterior_density,
)
from .observer import (
    TestStatistic,
    auc_from_detectability,
    detectability_from_auc,
    mpe,
    mpe_analytic_gaussian,
    roc_and_auc,
)
from .suite import SuiteReport, reproduce
from .tv import TvEstimate, tv_analytic, tv_average, tv_directional, tv_grid, tv_unimodal

__version__ = "0.1.0"

__all__ = [
    "auc_fi_slope_check",
    "auc_from_detectability",
    "auc_slope",
    "bayesian_fi_posterior_form",
    "bayesian_fi_prior_form",
    "bayesian_fi_var_tprime",
    "bayesian_fim",
    "BoundReport",
    "detectability_from_auc",
    "emse",
    "ExperimentConfig",
    "Exponential",
    "fisher_information",
    "fisher_matrix",
    "FisherResult",
    "GridDensity",
    "InfoBoundsError",
    "load_model",
    "make_exponential_prior_model",
    "make_flat_likelihood_model",
    "make_gaussian_imaging_model",
    "make_gaussian_location_model",
    "make_gaussian_scalar_model",
    "mpe",
    "mpe_analytic_gaussian",
    "mpe_slope",
    "MultivariateNormal",
    "Normal",
    "posterior_density",
    "reproduce",
    "roc_and_auc",
    "ScalarModel",
    "schwarz_bound_check",
    "slope_tv_identity_check",
    "SlopeEstimate",
    "SuiteReport",
    "TestStatistic",
    "tv_analytic",
    "tv_average",
    "tv_directional",
    "tv_grid",
    "tv_unimodal",
    "TvEstimate",
    "van_trees_check",
    "vector_slope_check",
    "VectorModel",
    "ziv_zakai_check",
    "ziv_zakai_rhs",
]
