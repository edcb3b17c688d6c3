"""Spatial information (SI) of rendered frames and the model's feature vector."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset import LodLevel, MeshDescriptor, ValidationError, lod as _lod

FEATURE_NAMES = ("faces", "distance", "lod", "si_geo", "si_col")
LOD_FEATURE = FEATURE_NAMES.index("lod")


class DimensionError(ValueError):
    pass


@dataclass(frozen=True)
class GrayImage:
    width: int
    height: int
    pixels: np.ndarray  # shape (height, width), values in [0, 255]

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim == 1:
            if px.size != self.width * self.height:
                raise DimensionError("pixel count does not match width*height")
            px = px.reshape(self.height, self.width)
        if px.shape != (self.height, self.width):
            raise DimensionError(f"pixel array shape {px.shape} != {(self.height, self.width)}")
        object.__setattr__(self, "pixels", px)

    @classmethod
    def from_array(cls, arr) -> GrayImage:
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim != 2:
            raise DimensionError("expected a 2-D array")
        return cls(arr.shape[1], arr.shape[0], arr)


def sobel_magnitude(img: GrayImage) -> GrayImage:
    """Gradient magnitude with 3x3 Sobel kernels over interior pixels only.

    The 1-pixel border is dropped, so the result is (w-2) x (h-2).
    """
    if img.width < 3 or img.height < 3:
        raise DimensionError(f"image must be at least 3x3, got {img.width}x{img.height}")
    p = img.pixels
    tl, tc, tr = p[:-2, :-2], p[:-2, 1:-1], p[:-2, 2:]
    ml, mr = p[1:-1, :-2], p[1:-1, 2:]
    bl, bc, br = p[2:, :-2], p[2:, 1:-1], p[2:, 2:]
    gx = (tr - tl) + 2.0 * (mr - ml) + (br - bl)
    gy = (bl - tl) + 2.0 * (bc - tc) + (br - tr)
    return GrayImage.from_array(np.sqrt(gx * gx + gy * gy))


def spatial_information(frames: Sequence[GrayImage], mode: str = "max") -> float:
    """Population std of interior Sobel magnitudes; max over frames, or the first frame only."""
    if not frames:
        raise ValueError("at least one frame is required")
    if mode == "first":
        frames = frames[:1]
    elif mode != "max":
        raise ValueError(f"unknown SI mode {mode!r}")
    return max(float(np.std(sobel_magnitude(f).pixels)) for f in frames)


@dataclass(frozen=True)
class FeatureVector:
    f: int
    d: float
    l: float
    s_geo: float
    s_col: float

    def __post_init__(self):
        vals = (self.f, self.d, self.l, self.s_geo, self.s_col)
        if not all(math.isfinite(v) for v in vals):
            raise ValidationError("feature values must be finite")
        if self.f < 1 or self.d <= 0 or not 0 <= self.l <= 1 or self.s_geo < 0 or self.s_col < 0:
            raise ValidationError(f"feature values out of range: {vals}")

    def as_array(self) -> np.ndarray:
        return np.array([self.f, self.d, self.l, self.s_geo, self.s_col], dtype=np.float64)


def make_features(mesh: MeshDescriptor, level: int | LodLevel, distance_m: float) -> FeatureVector:
    if not mesh.has_si:
        raise ValidationError(f"mesh {mesh.id} has no SI values")
    level = _lod(level)
    if level not in mesh.faces_per_lod:
        raise ValidationError(f"mesh {mesh.id} has no {level.name}")
    return FeatureVector(mesh.faces_per_lod[level], float(distance_m), level.fraction_removed,
                         mesh.si_geo, mesh.si_col)


# -- PGM (P5) frames ---------------------------------------------------------

def _pgm_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError("truncated PGM header")
        tokens.append(data[start:pos])
    # exactly one whitespace byte separates the header from the raster
    return tokens, pos + 1


def read_pgm(path: str | Path) -> GrayImage:
    data = Path(path).read_bytes()
    (magic, w, h, maxval), pos = _pgm_tokens(data, 4)
    if magic != b"P5":
        raise ValueError(f"{path}: not a binary PGM (P5) file")
    w, h, maxval = int(w), int(h), int(maxval)
    if maxval != 255:
        raise ValueError(f"{path}: only 8-bit PGM (maxval 255) is supported")
    raster = np.frombuffer(data, dtype=np.uint8, count=w * h, offset=pos)
    return GrayImage(w, h, raster.reshape(h, w).astype(np.float64))


def write_pgm(img: GrayImage, path: str | Path) -> None:
    px = np.clip(np.rint(img.pixels), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.width} {img.height}\n255\n".encode("ascii"))
        fh.write(px.tobytes())
