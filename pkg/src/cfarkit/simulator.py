"""Ground-truthed multiplicative clutter scenes, Z = X * Y.

Speckle Y is unit-mean Gamma(n, n) in power.  Backscatter X is a
constant (homogeneous), Gamma(shape, rate) (heterogeneous, giving K
clutter) or gamma_g0 / Gamma(shape_g0, 1) (extremely heterogeneous,
giving G0 clutter).  Targets scale the backscatter of their footprint, so
they still carry speckle.

Random numbers come from Philox counter-based streams keyed by
``(seed, purpose, row block)``; scenes are identical for any thread count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import ndimage

from .errors import DimMismatch
from .models import ClutterModel, Exponential, G0Compound, Gamma, KCompound
from .raster import Domain, SarImage

BLOCK_ROWS = 64
_PURPOSE = {"speckle": 0, "backscatter": 1, "targets": 2}


def substream(seed: int, purpose: str, block: int = 0) -> np.random.Generator:
    """Independent Philox generator for one (seed, purpose, block) triple."""
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    ss = np.random.SeedSequence([seed & 0xFFFFFFFF, seed >> 32, _PURPOSE[purpose], int(block)])
    return np.random.Generator(np.random.Philox(ss))


def _fill_blocks(shape, seed: int, purpose: str, draw, threads: int = 1) -> np.ndarray:
    h, w = shape
    out = np.empty((h, w))

    def block(b):
        lo = b * BLOCK_ROWS
        hi = min(h, lo + BLOCK_ROWS)
        out[lo:hi] = draw(substream(seed, purpose, b), (hi - lo, w))

    blocks = range((h + BLOCK_ROWS - 1) // BLOCK_ROWS)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(block, blocks))
    else:
        for b in blocks:
            block(b)
    return out


def gen_speckle(n: int, dims: Tuple[int, int], seed: int, threads: int = 1) -> np.ndarray:
    """Unit-mean Gamma(n, n) power-domain speckle."""
    if n < 1:
        raise ValueError("looks must be >= 1")
    return _fill_blocks(dims, seed, "speckle", lambda g, s: g.gamma(n, 1.0 / n, size=s), threads)


@dataclass(frozen=True)
class Homogeneous:
    power: float = 1.0

    def __post_init__(self):
        if not self.power > 0:
            raise ValueError("power must be > 0")


@dataclass(frozen=True)
class Heterogeneous:
    shape: float = 4.0
    rate: float = 4.0

    def __post_init__(self):
        if not (self.shape > 0 and self.rate > 0):
            raise ValueError("shape and rate must be > 0")


@dataclass(frozen=True)
class ExtremelyHeterogeneous:
    shape_g0: float = 3.0
    gamma_g0: float = 2.0

    def __post_init__(self):
        if not (self.shape_g0 > 0 and self.gamma_g0 > 0):
            raise ValueError("shape_g0 and gamma_g0 must be > 0")


Background = Union[Homogeneous, Heterogeneous, ExtremelyHeterogeneous]


@dataclass(frozen=True)
class TargetSpec:
    """Rectangular target; ``(row, col)`` is the footprint's top-left pixel."""

    row: int
    col: int
    extent_rows: int = 1
    extent_cols: int = 1
    multiplier: float = 10.0

    def __post_init__(self):
        if not self.multiplier > 1:
            raise ValueError("target multiplier must be > 1")
        if self.extent_rows < 1 or self.extent_cols < 1:
            raise ValueError("target extents must be >= 1")

    def slices(self):
        return slice(self.row, self.row + self.extent_rows), slice(self.col, self.col + self.extent_cols)


@dataclass(frozen=True)
class SceneSpec:
    width: int
    height: int
    looks: int = 1
    background: Background = field(default_factory=Homogeneous)
    targets: Tuple[TargetSpec, ...] = ()
    seed: int = 0

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("scene dimensions must be positive")
        if self.looks < 1:
            raise ValueError("looks must be >= 1")
        object.__setattr__(self, "targets", tuple(self.targets))
        for t in self.targets:
            if t.row < 0 or t.col < 0 or t.row + t.extent_rows > self.height or t.col + t.extent_cols > self.width:
                raise ValueError(f"target {t} lies outside the {self.height}x{self.width} scene")

    @property
    def shape(self) -> Tuple[int, int]:
        return self.height, self.width


def clutter_model(spec: SceneSpec) -> ClutterModel:
    """Closed/compound model of a clutter pixel for the scene's background."""
    bg, n = spec.background, spec.looks
    if isinstance(bg, Homogeneous):
        return Exponential(bg.power) if n == 1 else Gamma(float(n), n / bg.power)
    if isinstance(bg, Heterogeneous):
        return KCompound(bg.shape, bg.rate, n)
    return G0Compound(bg.shape_g0, bg.gamma_g0, n)


def gen_backscatter(spec: SceneSpec, threads: int = 1) -> np.ndarray:
    bg = spec.background
    if isinstance(bg, Homogeneous):
        return np.full(spec.shape, float(bg.power))
    if isinstance(bg, Heterogeneous):
        draw = lambda g, s: g.gamma(bg.shape, 1.0 / bg.rate, size=s)  # noqa: E731
    else:
        draw = lambda g, s: bg.gamma_g0 / g.gamma(bg.shape_g0, 1.0, size=s)  # noqa: E731
    return _fill_blocks(spec.shape, spec.seed, "backscatter", draw, threads)


def truth_mask(spec: SceneSpec) -> np.ndarray:
    truth = np.zeros(spec.shape, dtype=bool)
    for t in spec.targets:
        truth[t.slices()] = True
    return truth


def gen_scene(spec: SceneSpec, threads: int = 1) -> Tuple[SarImage, np.ndarray]:
    """Power-domain scene and its boolean truth mask."""
    x = gen_backscatter(spec, threads)
    for t in spec.targets:
        x[t.slices()] *= t.multiplier
    z = x * gen_speckle(spec.looks, spec.shape, spec.seed, threads)
    return SarImage(z, Domain.POWER, spec.looks), truth_mask(spec)


@dataclass(frozen=True)
class RateCounts:
    false_alarms: int
    clutter_pixels: int
    hits: int
    target_pixels: int

    @property
    def pfa(self) -> float:
        return self.false_alarms / self.clutter_pixels if self.clutter_pixels else 0.0

    @property
    def pd(self) -> float:
        return self.hits / self.target_pixels if self.target_pixels else 0.0


def measure_counts(
    mask: np.ndarray,
    truth: np.ndarray,
    guard_dilation: int = 0,
    valid: Optional[np.ndarray] = None,
) -> RateCounts:
    """False-alarm and detection counts.

    Clutter pixels are those inside ``valid`` (default: everywhere) and
    outside the truth footprint dilated by ``guard_dilation`` pixels.
    """
    mask = np.asarray(mask, dtype=bool)
    truth = np.asarray(truth, dtype=bool)
    if mask.shape != truth.shape or (valid is not None and np.shape(valid) != mask.shape):
        raise DimMismatch(f"mask {mask.shape} and truth {truth.shape} differ")
    valid = np.ones(mask.shape, dtype=bool) if valid is None else np.asarray(valid, dtype=bool)
    excluded = truth
    if guard_dilation > 0 and truth.any():
        excluded = ndimage.binary_dilation(truth, structure=np.ones((3, 3), dtype=bool), iterations=guard_dilation)
    clutter = valid & ~excluded
    return RateCounts(
        false_alarms=int(np.count_nonzero(mask & clutter)),
        clutter_pixels=int(np.count_nonzero(clutter)),
        hits=int(np.count_nonzero(mask & truth)),
        target_pixels=int(np.count_nonzero(truth)),
    )


def measure_rates(mask, truth, guard_dilation: int = 0, valid=None) -> Tuple[float, float]:
    """Empirical ``(pfa, pd)``."""
    c = measure_counts(mask, truth, guard_dilation, valid)
    return c.pfa, c.pd


def parse_targets(text: str) -> Tuple[TargetSpec, ...]:
    """``"row,col,rows,cols,mult; ..."`` into target specs."""
    targets = []
    for item in filter(None, (t.strip() for t in text.split(";"))):
        parts = [p.strip() for p in item.split(",")]
        if len(parts) != 5:
            raise ValueError(f"target {item!r} must be row,col,rows,cols,multiplier")
        r, c, er, ec = (int(p) for p in parts[:4])
        targets.append(TargetSpec(r, c, er, ec, float(parts[4])))
    return tuple(targets)


def scene_from_config(cfg: Dict[str, str]) -> SceneSpec:
    """Build a :class:`SceneSpec` from key=value settings.

    Keys: width, height, looks, seed, background (homogeneous |
    heterogeneous | extreme), power, shape, rate, shape_g0, gamma_g0,
    targets.
    """
    kind = cfg.get("background", "homogeneous").lower()
    if kind == "homogeneous":
        bg: Background = Homogeneous(float(cfg.get("power", 1.0)))
    elif kind == "heterogeneous":
        bg = Heterogeneous(float(cfg.get("shape", 4.0)), float(cfg.get("rate", cfg.get("shape", 4.0))))
    elif kind in ("extreme", "extremely-heterogeneous", "extremely_heterogeneous"):
        bg = ExtremelyHeterogeneous(float(cfg.get("shape_g0", 3.0)), float(cfg.get("gamma_g0", 2.0)))
    else:
        raise ValueError(f"unknown background {kind!r}")
    return SceneSpec(
        width=int(cfg["width"]),
        height=int(cfg["height"]),
        looks=int(cfg.get("looks", 1)),
        background=bg,
        targets=parse_targets(cfg.get("targets", "")),
        seed=int(cfg["seed"]),
    )
