"""EDF goodness-of-fit statistics and distance-based model selection."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Type, Union

import numpy as np

from ..errors import DegenerateCdf, InsufficientSamples
from .distributions import ClutterModel, family

log = logging.getLogger(__name__)


def _sorted_samples(samples, minimum: int = 2) -> np.ndarray:
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    if x.size < minimum:
        raise InsufficientSamples(f"need at least {minimum} samples, got {x.size}")
    return x


def cvm_from_uniform(u: np.ndarray) -> float:
    """Cramer-von Mises W^2 from already-transformed values u = F(x)."""
    u = np.sort(np.asarray(u, dtype=float))
    n = u.size
    i = np.arange(1, n + 1)
    return float(1.0 / (12 * n) + np.sum((u - (2 * i - 1) / (2.0 * n)) ** 2))


def cvm_distance(samples, model: ClutterModel) -> float:
    """One-sample Cramer-von Mises W^2 of ``samples`` against ``model``."""
    x = _sorted_samples(samples)
    return cvm_from_uniform(model.cdf(x))


def ad_from_uniform(u: np.ndarray) -> float:
    u = np.sort(np.asarray(u, dtype=float))
    if np.any(u <= 0.0) or np.any(u >= 1.0):
        raise DegenerateCdf("model cdf is exactly 0 or 1 at a sample")
    n = u.size
    i = np.arange(1, n + 1)
    return float(-n - np.sum((2 * i - 1) * (np.log(u) + np.log1p(-u[::-1]))) / n)


def anderson_darling(samples, model: ClutterModel) -> float:
    """One-sample Anderson-Darling A^2.

    Uses the survival function for the upper-tail term so that tail
    samples keep their precision.
    """
    x = _sorted_samples(samples)
    u = np.asarray(model.cdf(x), dtype=float)
    s = np.asarray(model.sf(x), dtype=float)
    if np.any(u <= 0.0) or np.any(s <= 0.0):
        raise DegenerateCdf("model cdf is exactly 0 or 1 at a sample")
    n = x.size
    i = np.arange(1, n + 1)
    return float(-n - np.sum((2 * i - 1) * (np.log(u) + np.log(s[::-1]))) / n)


def ad_ksample(sample_groups: Sequence) -> float:
    """k-sample Anderson-Darling statistic A^2_kN (Scholz & Stephens, 1987).

    This is the version for data that may contain ties, built on the
    right-continuous pooled EDF:

        A^2 = (1/N) sum_i (1/n_i) sum_j l_j (N M_ij - n_i B_j)^2 / (B_j (N - B_j))

    over distinct pooled values z_j (excluding the largest), with l_j the
    multiplicity of z_j, B_j the pooled count <= z_j and M_ij the count of
    group i <= z_j.
    """
    groups = [_sorted_samples(g) for g in sample_groups]
    if len(groups) < 2:
        raise InsufficientSamples("k-sample test needs at least two groups")
    pooled = np.concatenate(groups)
    n_total = pooled.size
    zstar, counts = np.unique(pooled, return_counts=True)
    if zstar.size < 2:
        return 0.0
    b = np.cumsum(counts)[:-1].astype(float)
    l = counts[:-1].astype(float)
    total = 0.0
    for g in groups:
        m = np.searchsorted(g, zstar[:-1], side="right").astype(float)
        total += np.sum(l * (n_total * m - g.size * b) ** 2 / (b * (n_total - b))) / g.size
    return float(total / n_total)


@dataclass
class RankedModel:
    family: str
    model: ClutterModel
    score: float
    n_params: float


@dataclass
class Selection:
    ranking: List[RankedModel] = field(default_factory=list)
    failures: List[Tuple[str, str]] = field(default_factory=list)

    def __iter__(self):
        return iter(self.ranking)

    def __len__(self):
        return len(self.ranking)

    def __getitem__(self, i):
        return self.ranking[i]

    @property
    def best(self) -> Optional[RankedModel]:
        return self.ranking[0] if self.ranking else None


STATISTICS = {"cvm": cvm_distance, "ad": anderson_darling}

# Score margins treated as ties.  Sized from the spread of the score gap
# between a one-parameter family and a nested two-parameter family fitted
# to the same data drawn from the smaller one (about the 99th percentile).
DEFAULT_TOLERANCE = {"cvm": 0.25, "ad": 1.5}


def select_model(
    samples,
    candidates: Sequence[Union[str, Type[ClutterModel]]],
    statistic: str = "cvm",
    tolerance: Optional[float] = None,
    looks: int = 1,
) -> Selection:
    """Fit every candidate family and rank them by goodness-of-fit distance.

    Candidates whose score lies within ``tolerance`` of the best score are
    treated as equally good and ordered by parameter count first, so a
    nested family (Weibull over exponential) only wins when it fits
    measurably better.  Pass ``tolerance=0`` for a pure score ranking.
    Families that fail to fit are skipped and reported in ``failures``.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 20:
        raise InsufficientSamples("model selection needs at least 20 samples")
    score_fn = STATISTICS[statistic]
    if tolerance is None:
        tolerance = DEFAULT_TOLERANCE[statistic]
    fitted: List[RankedModel] = []
    failures: List[Tuple[str, str]] = []
    for cand in candidates:
        cls = family(cand) if isinstance(cand, str) else cand
        try:
            model = cls.fit(x, looks=looks) if cls.family in ("k", "g0") else cls.fit(x)
            score = score_fn(x, model)
            if not np.isfinite(score):
                raise ValueError(f"non-finite score {score}")
        except Exception as exc:  # noqa: BLE001 - every failure is reported, never fatal
            log.info("skipping %s: %s", cls.family, exc)
            failures.append((cls.family, f"{type(exc).__name__}: {exc}"))
            continue
        fitted.append(RankedModel(cls.family, model, float(score), cls.n_params))
    if not fitted:
        return Selection([], failures)
    best = min(r.score for r in fitted)
    near = sorted((r for r in fitted if r.score <= best + tolerance), key=lambda r: (r.n_params, r.score))
    rest = sorted((r for r in fitted if r.score > best + tolerance), key=lambda r: r.score)
    return Selection(near + rest, failures)
