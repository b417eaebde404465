"""SAR rasters in complex, magnitude, power and log-power form, plus F32R I/O.

The internal log domain is the natural log of power. ``to_db`` is the
display-only decibel emitter.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass, replace
from enum import Enum
from typing import Union

import numpy as np

from .errors import FormatError, NonPositivePixel, SizeMismatch

F32R_MAGIC = "F32R"


class Domain(str, Enum):
    COMPLEX_IQ = "ciq"
    MAGNITUDE = "mag"
    POWER = "pow"
    LOG_POWER = "logpow"

    @classmethod
    def parse(cls, value: Union[str, "Domain"]) -> "Domain":
        if isinstance(value, Domain):
            return value
        aliases = {
            "complex-iq": cls.COMPLEX_IQ,
            "magnitude": cls.MAGNITUDE,
            "power": cls.POWER,
            "log-power": cls.LOG_POWER,
        }
        if value in aliases:
            return aliases[value]
        try:
            return cls(value)
        except ValueError:
            raise FormatError(f"unknown raster domain {value!r}") from None


@dataclass(frozen=True, eq=False)
class SarImage:
    """Immutable 2-D SAR raster.

    ``pixels`` has shape ``(height, width)`` for real domains and
    ``(height, width, 2)`` for interleaved (I, Q) complex pixels.
    """

    pixels: np.ndarray
    domain: Domain = Domain.POWER
    looks: int = 1

    def __post_init__(self):
        domain = Domain.parse(self.domain)
        pixels = np.asarray(self.pixels)
        if np.iscomplexobj(pixels):
            pixels = np.stack([pixels.real, pixels.imag], axis=-1)
        expected_ndim = 3 if domain is Domain.COMPLEX_IQ else 2
        if pixels.ndim != expected_ndim or (expected_ndim == 3 and pixels.shape[-1] != 2):
            raise SizeMismatch(f"pixel array of shape {pixels.shape} does not fit domain {domain.value}")
        if pixels.shape[0] < 1 or pixels.shape[1] < 1:
            raise SizeMismatch("raster must be at least 1x1")
        if int(self.looks) < 1:
            raise ValueError("looks must be >= 1")
        if domain in (Domain.MAGNITUDE, Domain.POWER) and np.any(pixels < 0):
            raise NonPositivePixel(f"{domain.value} pixels must be >= 0")
        pixels = pixels.copy()
        pixels.setflags(write=False)
        object.__setattr__(self, "pixels", pixels)
        object.__setattr__(self, "domain", domain)
        object.__setattr__(self, "looks", int(self.looks))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def shape(self) -> tuple:
        return self.pixels.shape[:2]

    def _with(self, pixels: np.ndarray, domain: Domain) -> "SarImage":
        return replace(self, pixels=pixels, domain=domain)


def _power_values(img: SarImage) -> np.ndarray:
    p = img.pixels.astype(np.float64)
    if img.domain is Domain.COMPLEX_IQ:
        return p[..., 0] ** 2 + p[..., 1] ** 2
    if img.domain is Domain.MAGNITUDE:
        return p * p
    if img.domain is Domain.LOG_POWER:
        return np.exp(p)
    return p


def to_magnitude(img: SarImage) -> SarImage:
    if img.domain is Domain.MAGNITUDE:
        return img
    p = img.pixels.astype(np.float64)
    if img.domain is Domain.COMPLEX_IQ:
        amp = np.hypot(p[..., 0], p[..., 1])
    elif img.domain is Domain.LOG_POWER:
        amp = np.exp(0.5 * p)
    else:
        amp = np.sqrt(p)
    return img._with(amp, Domain.MAGNITUDE)


def to_power(img: SarImage) -> SarImage:
    if img.domain is Domain.POWER:
        return img
    return img._with(_power_values(img), Domain.POWER)


def to_log_power(img: SarImage) -> SarImage:
    """Natural-log power image. Zero power is an error, never clamped."""
    if img.domain is Domain.LOG_POWER:
        return img
    if img.domain is Domain.MAGNITUDE:
        a = img.pixels.astype(np.float64)
        if np.any(a <= 0):
            raise NonPositivePixel("log of non-positive power pixel")
        return img._with(2.0 * np.log(a), Domain.LOG_POWER)
    p = _power_values(img)
    if np.any(p <= 0):
        raise NonPositivePixel("log of non-positive power pixel")
    return img._with(np.log(p), Domain.LOG_POWER)


def convert(img: SarImage, domain: Union[str, Domain]) -> SarImage:
    domain = Domain.parse(domain)
    if domain is Domain.MAGNITUDE:
        return to_magnitude(img)
    if domain is Domain.POWER:
        return to_power(img)
    if domain is Domain.LOG_POWER:
        return to_log_power(img)
    if img.domain is Domain.COMPLEX_IQ:
        return img
    raise FormatError("real-valued rasters cannot be converted to complex I/Q")


def to_db(img: SarImage) -> np.ndarray:
    """10*log10(A^2) for display. Not a domain of its own."""
    return (10.0 / np.log(10.0)) * to_log_power(img).pixels


def store_raster(img: SarImage, path: Union[str, os.PathLike]) -> None:
    """Write ``img`` as F32R: two ASCII header lines then little-endian float32."""
    header = f"{F32R_MAGIC}\n{img.width} {img.height} {img.looks} {img.domain.value}\n"
    payload = np.ascontiguousarray(img.pixels, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(payload)


def load_raster(path: Union[str, os.PathLike]) -> SarImage:
    with open(path, "rb") as fh:
        return read_raster(fh)


def read_raster(fh: io.BufferedIOBase) -> SarImage:
    magic = fh.readline().rstrip(b"\r\n")
    if magic != F32R_MAGIC.encode():
        raise FormatError(f"bad magic {magic[:16]!r}, expected {F32R_MAGIC!r}")
    fields = fh.readline().decode("ascii", errors="replace").split()
    if len(fields) != 4:
        raise FormatError("header must be '<width> <height> <looks> <domain>'")
    try:
        width, height, looks = (int(v) for v in fields[:3])
    except ValueError:
        raise FormatError(f"non-integer header fields {fields[:3]}") from None
    if width < 1 or height < 1 or looks < 1:
        raise FormatError("width, height and looks must be positive")
    domain = Domain.parse(fields[3])
    per_pixel = 2 if domain is Domain.COMPLEX_IQ else 1
    data = fh.read()
    expected = width * height * per_pixel * 4
    if len(data) != expected:
        raise SizeMismatch(f"payload has {len(data)} bytes, header implies {expected}")
    pixels = np.frombuffer(data, dtype="<f4").astype(np.float32)
    shape = (height, width, 2) if per_pixel == 2 else (height, width)
    return SarImage(pixels.reshape(shape), domain, looks)
