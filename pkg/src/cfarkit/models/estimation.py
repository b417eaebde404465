"""Background estimators, threshold-factor solvers and the two-model NP test."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy import stats

from ..errors import EmptyInput, InsufficientSamples, OutOfSupport, check_pfa
from .distributions import ClutterModel, Kde, silverman_bandwidth


def fit_mean(samples) -> float:
    """ML estimate of an exponential background mean (the sample average)."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise EmptyInput("cannot estimate a mean from zero samples")
    return float(x.mean())


def fit_mean_std(samples) -> Tuple[float, float]:
    """Mean and standard deviation with 1/N (biased ML) normalisation."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 2:
        raise InsufficientSamples("mean/std estimation needs at least 2 samples")
    mu = x.mean()
    return float(mu), float(np.sqrt(np.mean((x - mu) ** 2)))


def alpha_ca_exponential(n: int, pfa: float) -> float:
    """CA-CFAR scaling factor for one PUT against N iid exponential references.

    alpha = N * (PFA**(-1/N) - 1).  Computed with expm1 so that very large N
    keeps full precision (alpha -> -ln PFA as N -> inf).
    """
    pfa = check_pfa(pfa)
    if n < 1:
        raise ValueError("boundary count must be >= 1")
    return float(n * math.expm1(-math.log(pfa) / n))


def alpha_ca_exponential_block(n: int, m: int, pfa: float) -> float:
    """CA scaling factor when the PUT is the mean of M exponential pixels.

    The ratio of an M-pixel mean to an N-pixel mean is F(2M, 2N) distributed;
    at M = 1 this reduces to :func:`alpha_ca_exponential`.
    """
    pfa = check_pfa(pfa)
    if m == 1:
        return alpha_ca_exponential(n, pfa)
    return float(stats.f.isf(pfa, 2 * m, 2 * n))


def alpha_numeric(model: ClutterModel, pfa: float) -> float:
    """Threshold with PFA = integral of the model density above it."""
    return float(model.isf(check_pfa(pfa)))


def alpha_gaussian(pfa: float) -> float:
    """Standard-normal upper quantile, the default two-parameter factor."""
    return float(stats.norm.isf(check_pfa(pfa)))


def pd_for_target(target: ClutterModel, alpha: float) -> float:
    """Probability that a target pixel exceeds the absolute threshold ``alpha``."""
    return float(target.sf(alpha))


@dataclass(frozen=True)
class NpConfig:
    background: ClutterModel
    target: ClutterModel
    prior_background: float = 0.5
    prior_target: float = 0.5

    def __post_init__(self):
        pb, pt = self.prior_background, self.prior_target
        if not (0 < pb < 1 and 0 < pt < 1) or not math.isclose(pb + pt, 1.0, abs_tol=1e-12):
            raise ValueError("priors must lie in (0,1) and sum to 1")

    @property
    def ratio_threshold(self) -> float:
        return self.prior_background / self.prior_target


def np_likelihood_ratio(cfg: NpConfig, x: float) -> Tuple[float, str]:
    """Likelihood ratio p(x|target)/p(x|background) and the resulting label.

    Returns ``(ratio, "target")`` iff the ratio strictly exceeds the prior
    ratio; ties go to background.
    """
    pb = float(cfg.background.pdf(x))
    pt = float(cfg.target.pdf(x))
    if not (pb > 0 and np.isfinite(pb)) or not (pt >= 0 and np.isfinite(pt)):
        raise OutOfSupport(f"x={x} lies outside the background/target support")
    if cfg.target.lower_support > x or cfg.background.lower_support > x:
        raise OutOfSupport(f"x={x} lies outside the background/target support")
    ratio = pt / pb
    return ratio, ("target" if ratio > cfg.ratio_threshold else "background")


def kde_fit(samples, bandwidth=None) -> Kde:
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 2:
        raise InsufficientSamples("KDE needs at least 2 samples")
    return Kde.fit(x, bandwidth)


def kde_bandwidth(samples) -> float:
    """Silverman's rule of thumb, 1.06 * std * n**(-1/5)."""
    return silverman_bandwidth(samples)
