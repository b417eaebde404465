"""MASK files, ROI CSV and the key=value config format."""

from __future__ import annotations

import csv
import os
from typing import Dict, Iterable, Union

import numpy as np

from .errors import FormatError, SizeMismatch

PathLike = Union[str, os.PathLike]

MASK_MAGIC = "MASK"
ROI_FIELDS = ("id", "row", "col", "pixel_count", "peak", "mean")


def write_mask(mask: np.ndarray, path: PathLike) -> None:
    """``MASK`` / ``<width> <height>`` header, then one 0/1 byte per pixel."""
    m = np.asarray(mask, dtype=bool)
    h, w = m.shape
    with open(path, "wb") as fh:
        fh.write(f"{MASK_MAGIC}\n{w} {h}\n".encode("ascii"))
        fh.write(m.astype(np.uint8).tobytes())


def read_mask(path: PathLike) -> np.ndarray:
    with open(path, "rb") as fh:
        if fh.readline().rstrip(b"\r\n") != MASK_MAGIC.encode():
            raise FormatError("bad magic, expected MASK")
        try:
            w, h = (int(v) for v in fh.readline().split())
        except ValueError:
            raise FormatError("MASK header must be '<width> <height>'") from None
        data = fh.read()
    if len(data) != w * h:
        raise SizeMismatch(f"MASK payload has {len(data)} bytes, header implies {w * h}")
    raw = np.frombuffer(data, dtype=np.uint8)
    if np.any(raw > 1):
        raise FormatError("MASK bytes must be 0 or 1")
    return raw.reshape(h, w).astype(bool)


def write_rois_csv(rois: Iterable, path: PathLike) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(ROI_FIELDS)
        for r in rois:
            writer.writerow([r.id, f"{r.row:.3f}", f"{r.col:.3f}", r.pixel_count, f"{r.peak:.6g}", f"{r.mean:.6g}"])


def read_config(path: PathLike) -> Dict[str, str]:
    """Parse ``key=value`` lines; ``#`` starts a comment, blank lines ignored."""
    out: Dict[str, str] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, eq, value = line.partition("=")
            if not eq or not key.strip():
                raise FormatError(f"{path}:{lineno}: expected key=value")
            out[key.strip().replace("-", "_")] = value.strip()
    return out
