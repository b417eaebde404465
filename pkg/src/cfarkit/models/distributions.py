"""Clutter and target probability models.

Every model exposes ``pdf``, ``cdf``, ``sf``, ``quantile``, ``isf``,
``sample`` and a ``fit`` classmethod.  Closed-form families are thin wrappers
around :mod:`scipy.stats`.  The compound K and G0 families are evaluated by
integrating speckle over the backscatter law:

    Z = X * Y,   Y ~ Gamma(n, rate=n)   (unit-mean speckle, power domain)
    F_Z(z) = E_X[ F_Y(z / X) ]

with X ~ Gamma(shape, rate) for K and X = gamma / Gamma(shape, 1) for G0.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import ClassVar, Dict, Optional, Type

import numpy as np
from scipy import integrate, optimize, special, stats

from ..errors import ConvergenceFailure, InsufficientSamples

ArrayLike = np.ndarray


class ClutterModel:
    """Base class; subclasses are frozen dataclasses."""

    family: ClassVar[str] = ""
    n_params: ClassVar[float] = 1
    lower_support: ClassVar[float] = 0.0

    def pdf(self, x):
        raise NotImplementedError

    def cdf(self, x):
        raise NotImplementedError

    def sf(self, x):
        return 1.0 - self.cdf(x)

    def quantile(self, p):
        raise NotImplementedError

    def isf(self, s):
        return self.quantile(1.0 - np.asarray(s, dtype=float))

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        raise NotImplementedError

    def mean(self) -> float:
        raise NotImplementedError

    @classmethod
    def fit(cls, samples, **fixed) -> "ClutterModel":
        raise NotImplementedError

    def spec_string(self) -> str:
        raise NotImplementedError


def _check_positive(**values):
    for name, v in values.items():
        if not (np.isfinite(v) and v > 0):
            raise ValueError(f"{name} must be > 0, got {v}")


def _positive_samples(samples, minimum: int = 1) -> np.ndarray:
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < minimum:
        raise InsufficientSamples(f"need at least {minimum} samples, got {x.size}")
    return x


@dataclass(frozen=True)
class _ScipyModel(ClutterModel):
    """Shared plumbing for families with a scipy frozen distribution."""

    def _dist(self):
        raise NotImplementedError

    def pdf(self, x):
        return self._dist().pdf(x)

    def cdf(self, x):
        return self._dist().cdf(x)

    def sf(self, x):
        return self._dist().sf(x)

    def quantile(self, p):
        return self._dist().ppf(p)

    def isf(self, s):
        return self._dist().isf(s)

    def sample(self, rng, size):
        return self._dist().rvs(size=size, random_state=rng)

    def mean(self) -> float:
        return float(self._dist().mean())


@dataclass(frozen=True)
class Exponential(_ScipyModel):
    mean_value: float = 1.0
    family: ClassVar[str] = "exp"
    n_params: ClassVar[float] = 1

    def __post_init__(self):
        _check_positive(mean=self.mean_value)

    def _dist(self):
        return stats.expon(scale=self.mean_value)

    def sample(self, rng, size):
        return rng.exponential(self.mean_value, size=size)

    @classmethod
    def fit(cls, samples, **fixed):
        return cls(float(np.mean(_positive_samples(samples))))

    def spec_string(self):
        return f"exp:mean={self.mean_value!r}"


@dataclass(frozen=True)
class Rayleigh(_ScipyModel):
    scale: float = 1.0
    family: ClassVar[str] = "rayleigh"
    n_params: ClassVar[float] = 1

    def __post_init__(self):
        _check_positive(scale=self.scale)

    def _dist(self):
        return stats.rayleigh(scale=self.scale)

    @classmethod
    def fit(cls, samples, **fixed):
        x = _positive_samples(samples)
        return cls(float(np.sqrt(np.mean(x * x) / 2.0)))

    def spec_string(self):
        return f"rayleigh:scale={self.scale!r}"


@dataclass(frozen=True)
class Gamma(_ScipyModel):
    shape: float = 1.0
    rate: float = 1.0
    family: ClassVar[str] = "gamma"
    n_params: ClassVar[float] = 2

    def __post_init__(self):
        _check_positive(shape=self.shape, rate=self.rate)

    def _dist(self):
        return stats.gamma(self.shape, scale=1.0 / self.rate)

    def sample(self, rng, size):
        return rng.gamma(self.shape, 1.0 / self.rate, size=size)

    @classmethod
    def fit(cls, samples, **fixed):
        x = _positive_samples(samples, 2)
        a, _, scale = stats.gamma.fit(x, floc=0)
        return cls(float(a), float(1.0 / scale))

    def spec_string(self):
        return f"gamma:shape={self.shape!r},rate={self.rate!r}"


@dataclass(frozen=True)
class SqrtGamma(_ScipyModel):
    """Magnitude-domain gamma: X = sqrt(G), G ~ Gamma(shape, rate)."""

    shape: float = 1.0
    rate: float = 1.0
    family: ClassVar[str] = "sqrtgamma"
    n_params: ClassVar[float] = 2

    def __post_init__(self):
        _check_positive(shape=self.shape, rate=self.rate)

    def _dist(self):
        # Nakagami(nu, scale) has E[X^2] = scale^2
        return stats.nakagami(self.shape, scale=math.sqrt(self.shape / self.rate))

    def sample(self, rng, size):
        return np.sqrt(rng.gamma(self.shape, 1.0 / self.rate, size=size))

    @classmethod
    def fit(cls, samples, **fixed):
        g = Gamma.fit(np.square(_positive_samples(samples, 2)))
        return cls(g.shape, g.rate)

    def spec_string(self):
        return f"sqrtgamma:shape={self.shape!r},rate={self.rate!r}"


@dataclass(frozen=True)
class Weibull(_ScipyModel):
    shape: float = 1.0
    scale: float = 1.0
    family: ClassVar[str] = "weibull"
    n_params: ClassVar[float] = 2

    def __post_init__(self):
        _check_positive(shape=self.shape, scale=self.scale)

    def _dist(self):
        return stats.weibull_min(self.shape, scale=self.scale)

    def sample(self, rng, size):
        return self.scale * rng.weibull(self.shape, size=size)

    @classmethod
    def fit(cls, samples, **fixed):
        x = _positive_samples(samples, 2)
        c, _, scale = stats.weibull_min.fit(x, floc=0)
        return cls(float(c), float(scale))

    def spec_string(self):
        return f"weibull:shape={self.shape!r},scale={self.scale!r}"


@dataclass(frozen=True)
class LogNormal(_ScipyModel):
    mu: float = 0.0
    sigma: float = 1.0
    family: ClassVar[str] = "lognormal"
    n_params: ClassVar[float] = 2

    def __post_init__(self):
        _check_positive(sigma=self.sigma)

    def _dist(self):
        return stats.lognorm(self.sigma, scale=math.exp(self.mu))

    def sample(self, rng, size):
        return rng.lognormal(self.mu, self.sigma, size=size)

    @classmethod
    def fit(cls, samples, **fixed):
        x = _positive_samples(samples, 2)
        if np.any(x <= 0):
            raise ValueError("log-normal fit needs strictly positive samples")
        logs = np.log(x)
        return cls(float(logs.mean()), float(logs.std()))

    def spec_string(self):
        return f"lognormal:mu={self.mu!r},sigma={self.sigma!r}"


@dataclass(frozen=True)
class BetaPrime(_ScipyModel):
    """Single-look G0 intensity law: gamma * BetaPrime(1, shape).

    Density ``shape * gamma**shape / (gamma + z)**(shape + 1)``.
    """

    shape_g0: float = 3.0
    gamma_g0: float = 2.0
    family: ClassVar[str] = "betaprime"
    n_params: ClassVar[float] = 2

    def __post_init__(self):
        _check_positive(shape=self.shape_g0, gamma=self.gamma_g0)

    def _dist(self):
        return stats.betaprime(1.0, self.shape_g0, scale=self.gamma_g0)

    def sample(self, rng, size):
        return self.gamma_g0 * rng.exponential(size=size) / rng.gamma(self.shape_g0, size=size)

    @classmethod
    def fit(cls, samples, **fixed):
        m = G0Compound.fit(samples, looks=1)
        return cls(m.shape_g0, m.gamma_g0)

    def spec_string(self):
        return f"betaprime:shape={self.shape_g0!r},gamma={self.gamma_g0!r}"


# --------------------------------------------------------------------------
# compound (backscatter x speckle) families


_QUAD_TAIL = 1e-14
_GRID_DECADES = 8


class _Compound(ClutterModel):
    """Numeric compounding of unit-mean Gamma(n, n) speckle over a backscatter law.

    Integration runs in t = log(x) between backscatter quantiles
    1e-14 and 1 - 1e-14.  Quantiles invert a survival grid built at
    construction, refined by Brent's method.
    """

    looks: int

    def backscatter(self):
        raise NotImplementedError

    def _setup(self):
        xb = self.backscatter()
        lo, med, hi = np.log(xb.ppf([_QUAD_TAIL, 0.5, 1.0 - _QUAD_TAIL]))
        object.__setattr__(self, "_limits", (float(lo), float(med), float(hi)))
        scale = float(xb.median())
        z = scale * np.logspace(-_GRID_DECADES, _GRID_DECADES, 16 * 2 * _GRID_DECADES + 1)
        sf = self._integrate(z, "sf")
        object.__setattr__(self, "_grid", (np.log(z), sf))

    def _integrand(self, z: np.ndarray, kind: str):
        n = float(self.looks)
        xb = self.backscatter()

        def f(t):
            x = math.exp(t)
            w = xb.pdf(x) * x
            if w == 0.0:
                return np.zeros_like(z)
            u = n * z / x
            if kind == "cdf":
                return w * special.gammainc(n, u)
            if kind == "sf":
                return w * special.gammaincc(n, u)
            # pdf of X*Y at z given X = x is f_Y(z/x)/x
            return w * stats.gamma.pdf(z / x, n, scale=1.0 / n) / x

        return f

    def _integrate(self, z, kind: str) -> np.ndarray:
        z = np.atleast_1d(np.asarray(z, dtype=float))
        out = np.zeros_like(z)
        pos = z > 0
        if kind in ("cdf", "pdf"):
            out[~pos] = 0.0
        else:
            out[~pos] = 1.0
        if not np.any(pos):
            return out
        lo, med, hi = self._limits
        zp = z[pos]
        with warnings.catch_warnings():
            warnings.simplefilter("error", integrate.IntegrationWarning)
            try:
                parts = []
                for a, b in ((lo, med), (med, hi)):
                    val, err = integrate.quad_vec(
                        self._integrand(zp, kind), a, b, epsabs=1e-13, epsrel=1e-10, norm="max", limit=400
                    )
                    parts.append(val)
            except integrate.IntegrationWarning as exc:
                raise ConvergenceFailure(f"{self.family} {kind} quadrature failed: {exc}") from exc
        out[pos] = np.clip(parts[0] + parts[1], 0.0, None)
        return out

    def _shaped(self, x, values):
        return values[0] if np.ndim(x) == 0 else values.reshape(np.shape(x))

    def pdf(self, x):
        return self._shaped(x, self._integrate(np.ravel(x), "pdf"))

    def sf(self, x):
        return self._shaped(x, np.clip(self._integrate(np.ravel(x), "sf"), 0.0, 1.0))

    def cdf(self, x):
        return self._shaped(x, np.clip(self._integrate(np.ravel(x), "cdf"), 0.0, 1.0))

    def _isf_scalar(self, s: float) -> float:
        if not 0.0 < s < 1.0:
            raise ValueError("probability must be in (0,1)")
        logz, sf = self._grid
        target = math.log(s)
        # sf decreases along the grid; widen outward if s is off the table
        lo, hi = logz[0], logz[-1]
        while self._log_sf(lo) < target:
            lo -= math.log(10.0)
        while self._log_sf(hi) > target:
            hi += math.log(10.0)
            if hi - logz[-1] > 200:
                raise ConvergenceFailure(f"{self.family} quantile bracket failed for sf={s}")
        inside = (sf > 0) & (sf < 1)
        if np.any(inside):
            ls = np.full_like(sf, -np.inf)
            ls[sf > 0] = np.log(sf[sf > 0])
            above = np.nonzero(ls >= target)[0]
            below = np.nonzero(ls <= target)[0]
            if above.size and below.size:
                lo = max(lo, logz[above[-1]])
                hi = min(hi, logz[below[0]])
        try:
            root = optimize.brentq(lambda t: self._log_sf(t) - target, lo, hi, xtol=1e-13, rtol=1e-13)
        except ValueError as exc:
            raise ConvergenceFailure(str(exc)) from exc
        return math.exp(root)

    def _log_sf(self, t: float) -> float:
        v = float(self._integrate(np.array([math.exp(t)]), "sf")[0])
        return math.log(v) if v > 0 else -np.inf

    def isf(self, s):
        s_arr = np.asarray(s, dtype=float)
        vals = np.array([self._isf_scalar(float(v)) for v in s_arr.ravel()])
        return vals[0] if s_arr.ndim == 0 else vals.reshape(s_arr.shape)

    def quantile(self, p):
        return self.isf(1.0 - np.asarray(p, dtype=float))

    def _speckle(self, rng, size):
        return rng.gamma(self.looks, 1.0 / self.looks, size=size)


@dataclass(frozen=True)
class KCompound(_Compound):
    """K-distributed intensity: Gamma(shape, rate) backscatter times speckle."""

    shape: float = 4.0
    rate: float = 4.0
    looks: int = 1
    family: ClassVar[str] = "k"
    n_params: ClassVar[float] = 2

    def __post_init__(self):
        _check_positive(shape=self.shape, rate=self.rate)
        if int(self.looks) < 1:
            raise ValueError("looks must be >= 1")
        self._setup()

    def backscatter(self):
        return stats.gamma(self.shape, scale=1.0 / self.rate)

    def sample(self, rng, size):
        return rng.gamma(self.shape, 1.0 / self.rate, size=size) * self._speckle(rng, size)

    def mean(self) -> float:
        return self.shape / self.rate

    @classmethod
    def fit(cls, samples, looks: int = 1, **fixed):
        """Method-of-moments: E[Z^2]/E[Z]^2 = (1 + 1/shape)(1 + 1/n)."""
        x = _positive_samples(samples, 2)
        m1 = x.mean()
        r = np.mean(x * x) / (m1 * m1) / (1.0 + 1.0 / looks)
        if not r > 1.0:
            raise ConvergenceFailure("sample too light-tailed for a K fit")
        shape = 1.0 / (r - 1.0)
        return cls(float(shape), float(shape / m1), int(looks))

    def spec_string(self):
        return f"k:shape={self.shape!r},rate={self.rate!r},n={self.looks}"


@dataclass(frozen=True)
class G0Compound(_Compound):
    """G0 intensity: reciprocal-gamma backscatter gamma_g0 / Gamma(shape_g0, 1).

    The shape is stored positive; the conventional negative-shape
    parameterisation corresponds to ``-shape_g0``.
    """

    shape_g0: float = 3.0
    gamma_g0: float = 2.0
    looks: int = 1
    family: ClassVar[str] = "g0"
    n_params: ClassVar[float] = 2

    def __post_init__(self):
        _check_positive(shape=self.shape_g0, gamma=self.gamma_g0)
        if int(self.looks) < 1:
            raise ValueError("looks must be >= 1")
        self._setup()

    def backscatter(self):
        return stats.invgamma(self.shape_g0, scale=self.gamma_g0)

    def sample(self, rng, size):
        return self.gamma_g0 / rng.gamma(self.shape_g0, size=size) * self._speckle(rng, size)

    def mean(self) -> float:
        if self.shape_g0 <= 1:
            return float("inf")
        return self.gamma_g0 / (self.shape_g0 - 1.0)

    @classmethod
    def fit(cls, samples, looks: int = 1, **fixed):
        """Method-of-moments: E[Z^2]/E[Z]^2 = (a-1)/(a-2) (1 + 1/n), a > 2."""
        x = _positive_samples(samples, 2)
        m1 = x.mean()
        r = np.mean(x * x) / (m1 * m1) / (1.0 + 1.0 / looks)
        if not r > 1.0:
            raise ConvergenceFailure("sample too light-tailed for a G0 fit")
        a = (2.0 * r - 1.0) / (r - 1.0)
        return cls(float(a), float(m1 * (a - 1.0)), int(looks))

    def spec_string(self):
        return f"g0:shape={self.shape_g0!r},gamma={self.gamma_g0!r},n={self.looks}"


# --------------------------------------------------------------------------
# nonparametric


def silverman_bandwidth(samples) -> float:
    x = _positive_samples(samples, 2)
    return float(1.06 * x.std() * x.size ** (-0.2))


_KDE_CHUNK = 2_000_000


@dataclass(frozen=True, eq=False)
class Kde(ClutterModel):
    """Gaussian-kernel density estimate over ``samples``."""

    samples: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(2))
    bandwidth: float = 1.0
    family: ClassVar[str] = "kde"
    n_params: ClassVar[float] = math.inf
    lower_support: ClassVar[float] = -math.inf

    def __post_init__(self):
        s = _positive_samples(self.samples, 2).copy()
        s.sort()
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)
        _check_positive(bandwidth=self.bandwidth)

    def _reduce(self, x, kernel):
        x = np.asarray(x, dtype=float)
        flat = x.ravel()
        out = np.empty(flat.size)
        step = max(1, _KDE_CHUNK // self.samples.size)
        for i in range(0, flat.size, step):
            u = (flat[i:i + step, None] - self.samples[None, :]) / self.bandwidth
            out[i:i + step] = kernel(u).mean(axis=1)
        return out[0] if x.ndim == 0 else out.reshape(x.shape)

    def pdf(self, x):
        return self._reduce(x, stats.norm.pdf) / self.bandwidth

    def cdf(self, x):
        return self._reduce(x, special.ndtr)

    def sf(self, x):
        return self._reduce(x, lambda u: special.ndtr(-u))

    def quantile(self, p):
        p_arr = np.asarray(p, dtype=float)
        lo = self.samples[0] - 40 * self.bandwidth
        hi = self.samples[-1] + 40 * self.bandwidth

        def one(pv):
            if not 0.0 < pv < 1.0:
                raise ValueError("probability must be in (0,1)")
            return optimize.brentq(lambda v: float(self.cdf(v)) - pv, lo, hi, xtol=1e-12)

        vals = np.array([one(float(v)) for v in p_arr.ravel()])
        return vals[0] if p_arr.ndim == 0 else vals.reshape(p_arr.shape)

    def sample(self, rng, size):
        idx = rng.integers(0, self.samples.size, size=size)
        return self.samples[idx] + self.bandwidth * rng.standard_normal(size=size)

    def mean(self) -> float:
        return float(self.samples.mean())

    @classmethod
    def fit(cls, samples, bandwidth: Optional[float] = None, **fixed):
        if bandwidth is None or bandwidth == "auto":
            bandwidth = silverman_bandwidth(samples)
        return cls(np.asarray(samples, dtype=float), float(bandwidth))

    def spec_string(self):
        return f"kde:bandwidth={self.bandwidth!r}"


FAMILIES: Dict[str, Type[ClutterModel]] = {
    cls.family: cls
    for cls in (Exponential, Rayleigh, Gamma, SqrtGamma, Weibull, LogNormal, KCompound, G0Compound, BetaPrime, Kde)
}

_ALIASES = {"exponential": "exp", "k-compound": "k", "kcompound": "k", "g0compound": "g0", "lognorm": "lognormal"}

# spec-string keys -> constructor argument names
_KEYS = {
    "exp": {"mean": "mean_value"},
    "rayleigh": {"scale": "scale"},
    "gamma": {"shape": "shape", "rate": "rate"},
    "sqrtgamma": {"shape": "shape", "rate": "rate"},
    "weibull": {"shape": "shape", "scale": "scale"},
    "lognormal": {"mu": "mu", "sigma": "sigma"},
    "k": {"shape": "shape", "rate": "rate", "n": "looks"},
    "g0": {"shape": "shape_g0", "gamma": "gamma_g0", "n": "looks"},
    "betaprime": {"shape": "shape_g0", "gamma": "gamma_g0"},
    "kde": {"bandwidth": "bandwidth"},
}


def family(name: str) -> Type[ClutterModel]:
    key = name.strip().lower()
    key = _ALIASES.get(key, key)
    try:
        return FAMILIES[key]
    except KeyError:
        raise ValueError(f"unknown model family {name!r}; choose from {sorted(FAMILIES)}") from None


def parse_model(text: str, samples=None) -> ClutterModel:
    """Parse ``"family:key=value,..."`` (e.g. ``"k:shape=4,rate=4,n=1"``).

    A bare family name uses the constructor defaults.  ``kde`` needs
    ``samples``.
    """
    name, _, params = text.partition(":")
    cls = family(name)
    keys = _KEYS[cls.family]
    kwargs = {}
    for item in filter(None, (p.strip() for p in params.split(","))):
        k, eq, v = item.partition("=")
        k = k.strip().lower()
        if not eq or k not in keys:
            raise ValueError(f"bad parameter {item!r} for {cls.family}; expected keys {sorted(keys)}")
        arg = keys[k]
        if arg == "looks":
            kwargs[arg] = int(v)
        elif arg == "bandwidth" and v.strip() == "auto":
            kwargs[arg] = None
        else:
            kwargs[arg] = float(v)
    if cls is Kde:
        if samples is None:
            raise ValueError("kde model needs samples")
        return Kde.fit(samples, kwargs.get("bandwidth"))
    return cls(**kwargs)
