"""Clutter/target models, estimators, threshold solvers and goodness of fit."""

from .distributions import (
    FAMILIES,
    BetaPrime,
    ClutterModel,
    Exponential,
    G0Compound,
    Gamma,
    KCompound,
    Kde,
    LogNormal,
    Rayleigh,
    SqrtGamma,
    Weibull,
    family,
    parse_model,
    silverman_bandwidth,
)
from .estimation import (
    NpConfig,
    alpha_ca_exponential,
    alpha_ca_exponential_block,
    alpha_gaussian,
    alpha_numeric,
    fit_mean,
    fit_mean_std,
    kde_bandwidth,
    kde_fit,
    np_likelihood_ratio,
    pd_for_target,
)
from .gof import (
    RankedModel,
    Selection,
    ad_from_uniform,
    ad_ksample,
    anderson_darling,
    cvm_distance,
    cvm_from_uniform,
    select_model,
)
