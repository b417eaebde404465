"""Per-pixel CFAR decision rules and threshold-factor resolution.

Ratio statistics (linear and square law) compare ``x_put / reference``
against alpha; log-law statistics compare ``x_put - reference`` against
alpha_log.  Ties always go to background.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Optional, Sequence

import numpy as np
from scipy import optimize

from .errors import EmptyInput, NonPositiveBackground, ZeroSigma, check_pfa
from .models import (
    ClutterModel,
    Exponential,
    Rayleigh,
    alpha_ca_exponential_block,
    alpha_gaussian,
)
from .models.distributions import _ScipyModel
from .stencil import StencilSpec, boundary_count, split_windows

TARGET = "target"
BACKGROUND = "background"


class Strategy(str, Enum):
    CA = "ca"
    SOCA = "soca"
    GOCA = "goca"
    OS = "os"


class Law(str, Enum):
    LINEAR = "linear"
    SQUARE = "square"
    LOG = "log"


class Parameterization(str, Enum):
    ONE = "one"
    TWO = "two"


class LogEstimator(str, Enum):
    """How a one-parameter log-law detector estimates its log background.

    ``log-of-mean`` takes the log of the power-domain average, so the log
    detector is exactly the logarithm of the square-law ratio test.
    ``mean-of-log`` averages log pixels (the classic log-CFAR estimator,
    whose extra loss the window-inflation rule compensates).
    """

    LOG_OF_MEAN = "log-of-mean"
    MEAN_OF_LOG = "mean-of-log"


@dataclass(frozen=True)
class Decision:
    statistic: float
    threshold: float
    label: str

    @property
    def is_target(self) -> bool:
        return self.label == TARGET


def _decide(statistic: float, threshold: float) -> Decision:
    return Decision(float(statistic), float(threshold), TARGET if statistic > threshold else BACKGROUND)


@dataclass(frozen=True)
class DetectorConfig:
    strategy: Strategy = Strategy.CA
    parameterization: Parameterization = Parameterization.ONE
    law: Law = Law.SQUARE
    pfa: float = 1e-3
    os_q: float = 0.75
    alpha_override: Optional[float] = None
    background: Optional[ClutterModel] = None
    log_estimator: LogEstimator = LogEstimator.LOG_OF_MEAN
    calibration_trials: int = 200_000
    calibration_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "strategy", Strategy(self.strategy))
        object.__setattr__(self, "parameterization", Parameterization(self.parameterization))
        object.__setattr__(self, "law", Law(self.law))
        object.__setattr__(self, "log_estimator", LogEstimator(self.log_estimator))
        check_pfa(self.pfa)
        if not 0.0 < self.os_q <= 1.0:
            raise ValueError("os_q must be in (0,1]")
        if self.alpha_override is not None and not (self.law is Law.LOG or self.alpha_override > 0):
            raise ValueError("alpha_override must be > 0")
        if self.parameterization is Parameterization.TWO and self.strategy is Strategy.OS:
            raise ValueError("two-parameter CFAR supports CA, SOCA and GOCA only")

    def background_model(self) -> ClutterModel:
        """Clutter law used for alpha solving, in the law's working domain.

        Defaults to exponential power (square, log) or Rayleigh magnitude
        (linear).  Log-law models describe the power pixel.
        """
        if self.background is not None:
            return self.background
        return Rayleigh(1.0) if self.law is Law.LINEAR else Exponential(1.0)


# --------------------------------------------------------------------------
# per-pixel rules


def put_statistic(put_pixels: Sequence[float]) -> float:
    """Arithmetic mean of the M pixels under test."""
    x = np.asarray(put_pixels, dtype=float).ravel()
    if x.size == 0:
        raise EmptyInput("empty PUT block")
    return float(x.mean())


def _ratio_or_difference(x_put: float, reference: float, law: Law) -> float:
    if Law(law) is Law.LOG:
        return x_put - reference
    if not reference > 0:
        raise NonPositiveBackground(f"background estimate {reference} must be > 0")
    return x_put / reference


def decide_ca(x_put: float, mu_hat: float, alpha: float, law: Law = Law.SQUARE) -> Decision:
    return _decide(_ratio_or_difference(x_put, mu_hat, law), alpha)


def decide_soca(x_put: float, window_means: Sequence[float], alpha: float, law: Law = Law.SQUARE) -> Decision:
    """Smallest-of the four window means."""
    means = np.asarray(window_means, dtype=float)
    if Law(law) is not Law.LOG and np.any(means <= 0):
        raise NonPositiveBackground("all window means must be > 0")
    return _decide(_ratio_or_difference(x_put, float(means.min()), law), alpha)


def decide_goca(x_put: float, window_means: Sequence[float], alpha: float, law: Law = Law.SQUARE) -> Decision:
    """Greatest-of the four window means."""
    means = np.asarray(window_means, dtype=float)
    if Law(law) is not Law.LOG and np.any(means <= 0):
        raise NonPositiveBackground("all window means must be > 0")
    return _decide(_ratio_or_difference(x_put, float(means.max()), law), alpha)


def os_rank(n: int, q: float) -> int:
    """1-based ascending rank ceil(q*N) of the reference order statistic."""
    if not 0.0 < q <= 1.0:
        raise ValueError("q must be in (0,1]")
    # guard against q*N landing a hair above an integer through float error
    return max(1, min(n, math.ceil(round(q * n, 9))))


def order_statistic(boundary_pixels: Sequence[float], q: float) -> float:
    x = np.asarray(boundary_pixels, dtype=float).ravel()
    if x.size == 0:
        raise EmptyInput("empty boundary ring")
    k = os_rank(x.size, q)
    return float(np.partition(x, k - 1)[k - 1])


def decide_os(x_put: float, boundary_pixels: Sequence[float], q: float, alpha: float, law: Law = Law.SQUARE) -> Decision:
    return _decide(_ratio_or_difference(x_put, order_statistic(boundary_pixels, q), law), alpha)


def decide_two_param(x_put: float, mu_hat: float, sigma_hat: float, alpha: float, m: int = 1) -> Decision:
    """(x - mu) / (sigma / sqrt(M)) against alpha.

    The same normalisation serves log-domain inputs and linear-domain
    inputs.
    """
    if not sigma_hat > 0:
        raise ZeroSigma("background standard deviation must be > 0")
    sigma_eff = sigma_hat / math.sqrt(m)
    return _decide((x_put - mu_hat) / sigma_eff, alpha)


def two_param_threshold(mu_hat: float, sigma_hat: float, alpha: float, m: int = 1) -> float:
    """Pixel-value threshold mu + alpha * sigma / sqrt(M)."""
    return mu_hat + alpha * sigma_hat / math.sqrt(m)


def qdf_background_discriminant(x_put, mu, sigma, prior_b):
    """Negated background-class quadratic discriminant.

    score = (x - mu)^2 / (2 sigma^2) + ln(sigma^-2) / 2 - ln P(background)
    Works elementwise on arrays.
    """
    sigma = np.asarray(sigma, dtype=float)
    prior_b = np.asarray(prior_b, dtype=float)
    if np.any(sigma <= 0):
        raise ZeroSigma("sigma must be > 0")
    if np.any((prior_b <= 0) | (prior_b > 1)):
        raise ValueError("prior_b must be in (0,1]")
    d = (np.asarray(x_put, dtype=float) - mu) / sigma
    score = 0.5 * d * d - np.log(sigma) - np.log(prior_b)
    return float(score) if np.ndim(score) == 0 else score


def qdf_alpha_from_cfar(alpha, prior_b):
    """QDF threshold matching a CFAR factor: alpha^2 / 2 - ln P(background)."""
    return 0.5 * np.square(alpha) - np.log(prior_b)


def qdf_decide(score: float, alpha_qdf: float) -> Decision:
    return _decide(score, alpha_qdf)


# --------------------------------------------------------------------------
# threshold factors


def ring_window_indices(spec: StencilSpec) -> Dict[str, np.ndarray]:
    """Positions of each split window inside the row-major boundary ring."""
    ring = spec.boundary_support().ravel()
    ring_pos = np.cumsum(ring) - 1
    return {name: ring_pos[np.flatnonzero(mask.ravel())] for name, mask in split_windows(spec).as_dict().items()}


def _reference_values(boundary: np.ndarray, spec: StencilSpec, strategy: Strategy, q: float, geometric: bool):
    """Per-trial reference statistic from an (trials, N) boundary sample."""
    if strategy is Strategy.OS:
        k = os_rank(boundary.shape[1], q)
        return np.partition(boundary, k - 1, axis=1)[:, k - 1]
    data = np.log(boundary) if geometric else boundary

    def avg(a):
        m = a.mean(axis=1)
        return np.exp(m) if geometric else m

    if strategy is Strategy.CA:
        return avg(data)
    means = np.stack([avg(data[:, idx]) for idx in ring_window_indices(spec).values()], axis=1)
    return means.min(axis=1) if strategy is Strategy.SOCA else means.max(axis=1)


@functools.lru_cache(maxsize=256)
def calibrate_ratio_alpha(
    model: ClutterModel,
    spec: StencilSpec,
    strategy: Strategy,
    q: float,
    pfa: float,
    geometric: bool = False,
    trials: int = 200_000,
    seed: int = 0,
) -> float:
    """Monte Carlo threshold factor for ``PUT / reference > alpha``.

    Boundary rings are simulated from ``model``.  With a single PUT pixel
    and a closed-form model the false-alarm probability is averaged
    conditionally, ``PFA(alpha) = mean(sf(alpha * reference))``, which
    removes the PUT sampling noise; otherwise the empirical (1 - pfa)
    quantile of the simulated ratio is returned.  Deterministic in ``seed``.
    """
    pfa = check_pfa(pfa)
    n = boundary_count(spec)
    m = spec.put_count
    rng = np.random.Generator(np.random.Philox(seed))
    chunk = max(1, 4_000_000 // n)
    refs = []
    puts = []
    conditional = m == 1 and isinstance(model, _ScipyModel)
    for start in range(0, trials, chunk):
        size = min(chunk, trials - start)
        boundary = np.asarray(model.sample(rng, (size, n)), dtype=float)
        refs.append(_reference_values(boundary, spec, strategy, q, geometric))
        if not conditional:
            put = np.asarray(model.sample(rng, (size, m)), dtype=float)
            puts.append(np.exp(np.log(put).mean(axis=1)) if geometric else put.mean(axis=1))
    ref = np.concatenate(refs)
    if not conditional:
        return float(np.quantile(np.concatenate(puts) / ref, 1.0 - pfa))
    log_pfa = math.log(pfa)

    def excess(log_alpha):
        p = float(np.mean(model.sf(math.exp(log_alpha) * ref)))
        return (math.log(p) if p > 0 else -1e300) - log_pfa

    lo, hi = -10.0, 10.0
    while excess(hi) > 0:
        hi += 10.0
    while excess(lo) < 0:
        lo -= 10.0
    return float(math.exp(optimize.brentq(excess, lo, hi, xtol=1e-12)))


def resolve_alpha(config: DetectorConfig, spec: StencilSpec) -> float:
    """Threshold factor, in the units of the detection statistic.

    * ``alpha_override`` wins when present.
    * Two-parameter CFAR uses the standard-normal quantile of 1 - PFA.
    * One-parameter CA against exponential power clutter uses the closed
      form (F(2M, 2N) quantile; N(PFA^(-1/N) - 1) for one PUT).
    * Everything else is calibrated by Monte Carlo on the background model.
    * Log law returns the log of the ratio factor.
    """
    if config.alpha_override is not None:
        return float(config.alpha_override)
    if config.parameterization is Parameterization.TWO:
        return alpha_gaussian(config.pfa)
    model = config.background_model()
    geometric = config.law is Law.LOG and config.log_estimator is LogEstimator.MEAN_OF_LOG
    closed_form = (
        config.strategy is Strategy.CA
        and config.law is not Law.LINEAR
        and not geometric
        and isinstance(model, Exponential)
    )
    if closed_form:
        alpha = alpha_ca_exponential_block(boundary_count(spec), spec.put_count, config.pfa)
    else:
        alpha = calibrate_ratio_alpha(
            model,
            spec,
            config.strategy,
            float(config.os_q),
            float(config.pfa),
            geometric,
            int(config.calibration_trials),
            int(config.calibration_seed),
        )
    return math.log(alpha) if config.law is Law.LOG else alpha
