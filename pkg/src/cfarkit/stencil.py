"""CFAR stencil geometry and its convolution kernels.

A stencil is a centred PUT block, surrounded by a guard ring, surrounded by
a boundary ring whose pixels estimate the local clutter.  Geometry is held
as boolean support masks over the full stencil so that the kernel route
(engine) and the direct-gather route (detector) read the same index sets.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np


@dataclass(frozen=True)
class StencilSpec:
    put_rows: int = 1
    put_cols: int = 1
    guard_width: int = 1
    boundary_width: int = 1

    def __post_init__(self):
        for name in ("put_rows", "put_cols"):
            v = getattr(self, name)
            if v < 1 or v % 2 == 0:
                raise ValueError(f"{name} must be an odd positive integer, got {v}")
        if self.guard_width < 0:
            raise ValueError("guard_width must be >= 0")
        if self.boundary_width < 1:
            raise ValueError("boundary_width must be >= 1")

    @classmethod
    def parse(cls, put: str, guard: int, boundary: int) -> "StencilSpec":
        """Build from CLI-style arguments, e.g. ``parse("3x3", 1, 2)``."""
        m = re.fullmatch(r"\s*(\d+)\s*[xX]\s*(\d+)\s*", str(put))
        if not m:
            raise ValueError(f"PUT size must look like RxC, got {put!r}")
        return cls(int(m.group(1)), int(m.group(2)), int(guard), int(boundary))

    @property
    def inner_shape(self) -> Tuple[int, int]:
        """PUT plus guard block."""
        g = 2 * self.guard_width
        return self.put_rows + g, self.put_cols + g

    @property
    def shape(self) -> Tuple[int, int]:
        r, c = self.inner_shape
        b = 2 * self.boundary_width
        return r + b, c + b

    @property
    def center(self) -> Tuple[int, int]:
        return self.shape[0] // 2, self.shape[1] // 2

    @property
    def area(self) -> int:
        return self.shape[0] * self.shape[1]

    @property
    def put_count(self) -> int:
        return self.put_rows * self.put_cols

    def _block(self, rows: int, cols: int) -> np.ndarray:
        out = np.zeros(self.shape, dtype=bool)
        r0 = (self.shape[0] - rows) // 2
        c0 = (self.shape[1] - cols) // 2
        out[r0:r0 + rows, c0:c0 + cols] = True
        return out

    def put_support(self) -> np.ndarray:
        return self._block(self.put_rows, self.put_cols)

    def inner_support(self) -> np.ndarray:
        return self._block(*self.inner_shape)

    def guard_support(self) -> np.ndarray:
        return self.inner_support() & ~self.put_support()

    def boundary_support(self) -> np.ndarray:
        return ~self.inner_support()


def boundary_count(spec: StencilSpec) -> int:
    """Number N of reference pixels in the boundary ring."""
    r, c = spec.shape
    ir, ic = spec.inner_shape
    return r * c - ir * ic


@dataclass(frozen=True, eq=False)
class KernelSet:
    f_T: np.ndarray
    f_B: np.ndarray
    f_whole: np.ndarray
    f_put_g: np.ndarray

    @property
    def put_count(self) -> int:
        return int(np.count_nonzero(self.f_T))

    @property
    def boundary_count(self) -> int:
        return int(np.count_nonzero(self.f_B))


def build_kernels(spec: StencilSpec) -> KernelSet:
    put = spec.put_support()
    ring = spec.boundary_support()
    f_T = put / put.sum()
    f_B = ring / ring.sum()
    f_whole = np.ones(spec.shape)
    f_put_g = spec.inner_support().astype(float)
    return KernelSet(f_T=f_T, f_B=f_B, f_whole=f_whole, f_put_g=f_put_g)


@dataclass(frozen=True, eq=False)
class SplitWindows:
    """Leading/lagging sub-windows of the boundary ring as boolean masks."""

    top: np.ndarray
    left: np.ndarray
    bottom: np.ndarray
    right: np.ndarray

    def as_dict(self) -> Dict[str, np.ndarray]:
        return {"top": self.top, "left": self.left, "bottom": self.bottom, "right": self.right}

    def counts(self) -> Dict[str, int]:
        return {k: int(v.sum()) for k, v in self.as_dict().items()}

    def kernels(self) -> Dict[str, np.ndarray]:
        """Averaging kernel for each window (1/count on its support)."""
        return {k: v / v.sum() for k, v in self.as_dict().items()}


def split_windows(spec: StencilSpec) -> SplitWindows:
    """Split the boundary ring into top/left/bottom/right windows.

    Top and bottom windows take the full ring rows including the corner
    squares; left and right take the remaining side strips.
    """
    b = spec.boundary_width
    rows, cols = spec.shape
    top = np.zeros(spec.shape, dtype=bool)
    top[:b, :] = True
    bottom = np.zeros(spec.shape, dtype=bool)
    bottom[rows - b:, :] = True
    left = np.zeros(spec.shape, dtype=bool)
    left[b:rows - b, :b] = True
    right = np.zeros(spec.shape, dtype=bool)
    right[b:rows - b, cols - b:] = True
    return SplitWindows(top=top, left=left, bottom=bottom, right=right)
