"""Whole-image CFAR execution.

The sliding-window detector is run as linear filtering: PUT and boundary
averages are convolutions with the stencil kernels, evaluated either
directly (spatial engine) or by zero-padded FFT (fft engine).  OS-CFAR has
no linear form and runs as a direct windowed rank pass.

Pixels whose stencil does not fit inside the image are not evaluated:
their statistic is NaN and their mask value 0.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from scipy import fft as sp_fft
from scipy import ndimage
from scipy.spatial import cKDTree

from .detector import (
    DetectorConfig,
    Law,
    LogEstimator,
    Parameterization,
    Strategy,
    os_rank,
    resolve_alpha,
)
from .errors import DomainMismatch, KernelTooLarge
from .raster import Domain, SarImage
from .stencil import KernelSet, StencilSpec, build_kernels, split_windows

log = logging.getLogger(__name__)

FFT_CROSSOVER_AREA = 225

Region = Tuple[int, int, int, int]


def default_threads() -> int:
    env = os.environ.get("CFARKIT_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def valid_region(image_shape, kernel_shape) -> Region:
    """Half-open ``(row0, row1, col0, col1)`` where the kernel fully fits."""
    h, w = image_shape
    kh, kw = kernel_shape
    if kh > h or kw > w:
        raise KernelTooLarge(f"kernel {kh}x{kw} does not fit image {h}x{w}")
    ch, cw = kh // 2, kw // 2
    # output (m, n) reads rows m - (kh - 1 - ch) .. m + ch
    return kh - 1 - ch, h - ch, kw - 1 - cw, w - cw


def _row_bands(n_rows: int, threads: int) -> List[Tuple[int, int]]:
    bands = max(1, min(threads, n_rows))
    edges = np.linspace(0, n_rows, bands + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def convolve_spatial(image: np.ndarray, kernel: np.ndarray, threads: int = 1) -> np.ndarray:
    """True 2-D convolution, evaluated only where the kernel fully fits.

    Output has the image's shape with NaN outside the valid region.  Terms
    are accumulated weight by weight in a fixed order, so splitting the
    rows across threads gives bit-identical results.
    """
    img = np.asarray(image, dtype=np.float64)
    k = np.asarray(kernel, dtype=np.float64)
    r0, r1, c0, c1 = valid_region(img.shape, k.shape)
    kh, kw = k.shape
    out = np.full(img.shape, np.nan)
    if r1 <= r0 or c1 <= c0:
        return out
    wv = c1 - c0
    # group taps by weight: sum the shifted slices, then scale once
    groups: Dict[float, List[Tuple[int, int]]] = {}
    for a, b in zip(*np.nonzero(k)):
        groups.setdefault(float(k[a, b]), []).append((int(a), int(b)))

    def band(lo: int, hi: int):
        acc = np.zeros((hi - lo, wv))
        part = np.empty_like(acc)
        for weight, taps in groups.items():
            part.fill(0.0)
            for a, b in taps:
                # out[m, n] += k[a, b] * img[m - a + ch, n - b + cw]
                rs = (kh - 1) - a + lo
                cs = (kw - 1) - b
                part += img[rs:rs + (hi - lo), cs:cs + wv]
            acc += weight * part
        out[r0 + lo:r0 + hi, c0:c1] = acc

    bands = _row_bands(r1 - r0, threads)
    if len(bands) == 1:
        band(*bands[0])
    else:
        with ThreadPoolExecutor(max_workers=len(bands)) as pool:
            list(pool.map(lambda lh: band(*lh), bands))
    return out


class _FftConvolver:
    """Caches the padded image spectrum for repeated kernels of one shape."""

    def __init__(self, image: np.ndarray, kernel_shape, threads: int = 1):
        self.image = np.asarray(image, dtype=np.float64)
        self.kernel_shape = tuple(kernel_shape)
        self.region = valid_region(self.image.shape, self.kernel_shape)
        h, w = self.image.shape
        kh, kw = self.kernel_shape
        self.full = (h + kh - 1, w + kw - 1)
        self.fshape = tuple(sp_fft.next_fast_len(n, real=True) for n in self.full)
        self.threads = self.workers = threads
        self.spectrum = sp_fft.rfft2(self.image, self.fshape, workers=threads)

    def __call__(self, kernel: np.ndarray) -> np.ndarray:
        k = np.asarray(kernel, dtype=np.float64)
        if k.shape != self.kernel_shape:
            raise ValueError("kernel shape differs from the cached plan")
        full = sp_fft.irfft2(self.spectrum * sp_fft.rfft2(k, self.fshape, workers=self.workers), self.fshape, workers=self.workers)
        kh, kw = k.shape
        ch, cw = kh // 2, kw // 2
        h, w = self.image.shape
        same = full[ch:ch + h, cw:cw + w]
        out = np.full(self.image.shape, np.nan)
        r0, r1, c0, c1 = self.region
        out[r0:r1, c0:c1] = same[r0:r1, c0:c1]
        return out


def convolve_fft(image: np.ndarray, kernel: np.ndarray, threads: int = 1) -> np.ndarray:
    """Same contract as :func:`convolve_spatial` via transform-multiply-inverse."""
    return _FftConvolver(image, np.shape(kernel), threads)(kernel)


class _SpatialConvolver:
    def __init__(self, image: np.ndarray, kernel_shape, threads: int = 1):
        self.image = np.asarray(image, dtype=np.float64)
        self.kernel_shape = tuple(kernel_shape)
        self.threads = threads
        valid_region(self.image.shape, self.kernel_shape)

    def __call__(self, kernel: np.ndarray) -> np.ndarray:
        return convolve_spatial(self.image, kernel, self.threads)


def _convolver(image: np.ndarray, kernel_shape, engine: str, threads: int):
    if engine == "fft":
        return _FftConvolver(image, kernel_shape, threads)
    if engine == "spatial":
        return _SpatialConvolver(image, kernel_shape, threads)
    raise ValueError(f"unknown engine {engine!r}")


def choose_engine(spec: StencilSpec, engine: str = "auto", crossover_area: int = FFT_CROSSOVER_AREA) -> str:
    if engine == "auto":
        return "fft" if spec.area > crossover_area else "spatial"
    if engine not in ("spatial", "fft"):
        raise ValueError(f"unknown engine {engine!r}")
    return engine


@dataclass
class LocalStats:
    mu: np.ndarray
    sigma: np.ndarray
    clamped: int = 0


def _mean_std(conv, kernel: np.ndarray, conv_sq=None) -> LocalStats:
    mu = conv(kernel)
    if conv_sq is None:
        conv_sq = type(conv)(conv.image * conv.image, conv.kernel_shape, conv.threads)
    var = conv_sq(kernel) - mu * mu
    neg = var < 0
    clamped = int(np.count_nonzero(neg))
    var[neg] = 0.0
    return LocalStats(mu, np.sqrt(var), clamped)


def local_stats(image: np.ndarray, kernels: KernelSet, engine: str = "spatial", threads: int = 1) -> LocalStats:
    """Boundary-ring mean and 1/N standard deviation maps.

    sigma = sqrt(f_B * I^2 - (f_B * I)^2); negative round-off in the
    variance is clamped to zero and counted in ``clamped``.
    """
    img = np.asarray(image, dtype=np.float64)
    conv = _convolver(img, kernels.f_B.shape, engine, threads)
    return _mean_std(conv, kernels.f_B)


def ring_offsets(spec: StencilSpec) -> Tuple[np.ndarray, np.ndarray]:
    rr, cc = np.nonzero(spec.boundary_support())
    return rr, cc


def order_statistic_map(image: np.ndarray, spec: StencilSpec, q: float, max_block: int = 4_000_000) -> np.ndarray:
    """x_(Q) of the boundary ring at every valid pixel, by direct ranking."""
    img = np.asarray(image, dtype=np.float64)
    r0, r1, c0, c1 = valid_region(img.shape, spec.shape)
    out = np.full(img.shape, np.nan)
    rr, cc = ring_offsets(spec)
    n = rr.size
    k = os_rank(n, q)
    wv = c1 - c0
    rows_per_block = max(1, max_block // max(1, wv * n))
    windows = np.lib.stride_tricks.sliding_window_view(img, spec.shape)
    for lo in range(0, r1 - r0, rows_per_block):
        hi = min(r1 - r0, lo + rows_per_block)
        ring = windows[lo:hi, :, rr, cc]
        out[r0 + lo:r0 + hi, c0:c1] = np.partition(ring, k - 1, axis=-1)[..., k - 1]
    return out


# --------------------------------------------------------------------------
# detection


@dataclass
class Roi:
    id: int
    row: float
    col: float
    pixel_count: int
    bbox: Tuple[int, int, int, int]
    peak: float
    mean: float


@dataclass
class DetectionMap:
    statistic_map: np.ndarray
    threshold_map: np.ndarray
    mask: np.ndarray
    valid_region: Region
    alpha: float
    engine: str
    rois: List[Roi] = field(default_factory=list)
    diagnostics: Dict[str, int] = field(default_factory=dict)

    @property
    def valid_count(self) -> int:
        r0, r1, c0, c1 = self.valid_region
        return max(0, r1 - r0) * max(0, c1 - c0)

    def valid_mask(self) -> np.ndarray:
        m = np.zeros(self.mask.shape, dtype=bool)
        r0, r1, c0, c1 = self.valid_region
        m[r0:r1, c0:c1] = True
        return m


_LAW_DOMAIN = {Law.SQUARE: Domain.POWER, Law.LINEAR: Domain.MAGNITUDE, Law.LOG: Domain.LOG_POWER}


def _as_array(image: Union[SarImage, np.ndarray], law: Law) -> np.ndarray:
    if isinstance(image, SarImage):
        expected = _LAW_DOMAIN[law]
        if image.domain is not expected:
            raise DomainMismatch(
                f"{law.value}-law detection needs a {expected.value} image, got {image.domain.value}"
            )
        return image.pixels.astype(np.float64)
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim != 2:
        raise DomainMismatch("expected a 2-D real image")
    return arr


def compute_statistic(
    image: np.ndarray,
    spec: StencilSpec,
    config: DetectorConfig,
    engine: str,
    threads: int = 1,
) -> Tuple[np.ndarray, Dict[str, int]]:
    """Detection statistic map (NaN where undefined or not evaluated)."""
    img = np.asarray(image, dtype=np.float64)
    kernels = build_kernels(spec)
    windows = split_windows(spec).kernels()
    diag = {"clamped_sigma": 0, "nonpositive_background": 0, "zero_sigma": 0}
    law = config.law
    one = config.parameterization is Parameterization.ONE
    log_of_mean = law is Law.LOG and config.log_estimator is LogEstimator.LOG_OF_MEAN and one
    # averages are taken in `work`; log-of-mean averages power then logs
    work = np.exp(img) if log_of_mean else img
    conv = _convolver(work, spec.shape, engine, threads)
    put = conv(kernels.f_T)

    if one:
        if config.strategy is Strategy.CA:
            ref = conv(kernels.f_B)
        elif config.strategy is Strategy.OS:
            ref = order_statistic_map(img, spec, config.os_q)
            if log_of_mean:
                ref = np.exp(ref)
        else:
            means = np.stack([conv(k) for k in windows.values()])
            ref = means.min(axis=0) if config.strategy is Strategy.SOCA else means.max(axis=0)
        with np.errstate(divide="ignore", invalid="ignore"):
            if law is Law.LOG:
                stat = np.log(put) - np.log(ref) if log_of_mean else put - ref
            else:
                bad = ~(ref > 0) & ~np.isnan(ref)
                diag["nonpositive_background"] = int(np.count_nonzero(bad))
                stat = put / ref
                stat[bad] = np.nan
        return stat, diag

    if config.strategy is Strategy.CA:
        st = _mean_std(conv, kernels.f_B)
        mu, sigma = st.mu, st.sigma
        diag["clamped_sigma"] = st.clamped
    else:
        conv_sq = _convolver(work * work, spec.shape, engine, threads)
        stats = [_mean_std(conv, k, conv_sq) for k in windows.values()]
        mus = np.stack([s.mu for s in stats])
        sigmas = np.stack([s.sigma for s in stats])
        diag["clamped_sigma"] = sum(s.clamped for s in stats)
        if config.strategy is Strategy.SOCA:
            pick = np.argmin(np.nan_to_num(mus, nan=np.inf), axis=0)
        else:
            pick = np.argmax(np.nan_to_num(mus, nan=-np.inf), axis=0)
        mu = np.take_along_axis(mus, pick[None], axis=0)[0]
        sigma = np.take_along_axis(sigmas, pick[None], axis=0)[0]
    zero = sigma == 0
    diag["zero_sigma"] = int(np.count_nonzero(zero))
    with np.errstate(divide="ignore", invalid="ignore"):
        stat = (put - mu) / (sigma / math.sqrt(spec.put_count))
    stat[zero] = np.nan
    return stat, diag


def run_detection(
    image: Union[SarImage, np.ndarray],
    stencil: StencilSpec,
    config: DetectorConfig,
    engine: str = "auto",
    threads: Optional[int] = None,
    border: str = "valid",
    crossover_area: int = FFT_CROSSOVER_AREA,
    alpha: Optional[float] = None,
) -> DetectionMap:
    """Run one CFAR configuration over a whole image.

    ``alpha`` (statistic units) bypasses :func:`resolve_alpha` for sweeps.
    ``border="reflect"`` mirrors the image edges so every pixel is
    evaluated; the default leaves edge pixels unevaluated.
    """
    img = _as_array(image, config.law)
    threads = default_threads() if threads is None else max(1, int(threads))
    chosen = choose_engine(stencil, engine, crossover_area)
    if border == "reflect":
        ph, pw = stencil.shape[0] // 2, stencil.shape[1] // 2
        padded = np.pad(img, ((ph, ph), (pw, pw)), mode="reflect")
        stat, diag = compute_statistic(padded, stencil, config, chosen, threads)
        stat = stat[ph:ph + img.shape[0], pw:pw + img.shape[1]]
        region: Region = (0, img.shape[0], 0, img.shape[1])
    elif border == "valid":
        region = valid_region(img.shape, stencil.shape)
        stat, diag = compute_statistic(img, stencil, config, chosen, threads)
    else:
        raise ValueError(f"unknown border policy {border!r}")
    a = resolve_alpha(config, stencil) if alpha is None else float(alpha)
    threshold = np.full(img.shape, a)
    with np.errstate(invalid="ignore"):
        mask = stat > threshold
    r0, r1, c0, c1 = region
    inside = np.zeros(img.shape, dtype=bool)
    inside[r0:r1, c0:c1] = True
    mask &= inside
    return DetectionMap(stat, threshold, mask, region, a, chosen, diagnostics=diag)


# --------------------------------------------------------------------------
# ROI extraction


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, i: int) -> int:
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def extract_rois(
    mask: np.ndarray,
    min_size: int = 1,
    max_size: Optional[int] = None,
    min_separation: float = 0.0,
    statistic: Optional[np.ndarray] = None,
) -> List[Roi]:
    """8-connected components, size-filtered, then merged by centroid distance.

    Components with fewer than ``min_size`` or more than ``max_size``
    pixels are dropped.  Surviving components whose centroids are closer
    than ``min_separation`` are merged (transitively) into one ROI.
    """
    mask = np.asarray(mask, dtype=bool)
    labels, count = ndimage.label(mask, structure=np.ones((3, 3), dtype=int))
    if count == 0:
        return []
    comps = []
    for idx, sl in enumerate(ndimage.find_objects(labels), start=1):
        rr, cc = np.nonzero(labels[sl] == idx)
        rr = rr + sl[0].start
        cc = cc + sl[1].start
        size = rr.size
        if size < min_size or (max_size is not None and size > max_size):
            continue
        comps.append((rr, cc))
    if not comps:
        return []
    centroids = np.array([(rr.mean(), cc.mean()) for rr, cc in comps])
    uf = _UnionFind(len(comps))
    if min_separation > 0 and len(comps) > 1:
        for i, j in cKDTree(centroids).query_pairs(r=min_separation):
            if np.hypot(*(centroids[i] - centroids[j])) < min_separation:
                uf.union(i, j)
    groups: Dict[int, List[int]] = {}
    for i in range(len(comps)):
        groups.setdefault(uf.find(i), []).append(i)
    values = statistic if statistic is not None else mask.astype(float)
    rois = []
    for roi_id, root in enumerate(sorted(groups)):
        rr = np.concatenate([comps[i][0] for i in groups[root]])
        cc = np.concatenate([comps[i][1] for i in groups[root]])
        v = np.asarray(values)[rr, cc]
        rois.append(
            Roi(
                id=roi_id,
                row=float(rr.mean()),
                col=float(cc.mean()),
                pixel_count=int(rr.size),
                bbox=(int(rr.min()), int(rr.max()), int(cc.min()), int(cc.max())),
                peak=float(np.nanmax(v)) if np.any(np.isfinite(v)) else float("nan"),
                mean=float(np.nanmean(v)) if np.any(np.isfinite(v)) else float("nan"),
            )
        )
    return rois
