"""Point-set distortion metrics: symmetric Hausdorff, symmetrised RMS and Chamfer.

Meshes are compared through their vertex sets (no surface sampling).
Chamfer uses squared distances: mean NN distance^2 from a to b plus from b to a.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

_CHUNK = 2048


def as_points(points) -> np.ndarray:
    p = np.asarray(points, dtype=np.float64)
    if p.ndim == 1 and p.size == 3:
        p = p.reshape(1, 3)
    if p.ndim != 2 or p.shape[1] != 3:
        raise ValueError(f"expected an (n, 3) point array, got shape {p.shape}")
    if len(p) == 0:
        raise ValueError("point set is empty")
    if not np.isfinite(p).all():
        raise ValueError("point coordinates must be finite")
    return p


def nearest_sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """For every point of a, the squared distance to its nearest point of b."""
    out = np.empty(len(a))
    for s in range(0, len(a), _CHUNK):
        blk = a[s:s + _CHUNK]
        dx = blk[:, None, 0] - b[None, :, 0]
        dy = blk[:, None, 1] - b[None, :, 1]
        dz = blk[:, None, 2] - b[None, :, 2]
        out[s:s + _CHUNK] = (dx * dx + dy * dy + dz * dz).min(axis=1)
    return out


def _directed(a, b) -> tuple[np.ndarray, np.ndarray]:
    a, b = as_points(a), as_points(b)
    return nearest_sq_dists(a, b), nearest_sq_dists(b, a)


def hausdorff(a, b) -> float:
    ab, ba = _directed(a, b)
    return math.sqrt(max(float(ab.max()), float(ba.max())))


def _mean_sq(ab: np.ndarray, ba: np.ndarray) -> tuple[float, float]:
    # fsum is correctly rounded, so the result does not depend on summation order
    return math.fsum(ab) / len(ab), math.fsum(ba) / len(ba)


def rmse_points(a, b) -> float:
    ma, mb = _mean_sq(*_directed(a, b))
    return math.sqrt((ma + mb) / 2.0)


def chamfer(a, b) -> float:
    ma, mb = _mean_sq(*_directed(a, b))
    return ma + mb


def all_metrics(a, b) -> dict[str, float]:
    ab, ba = _directed(a, b)
    ma, mb = _mean_sq(ab, ba)
    return {
        "hausdorff": math.sqrt(max(float(ab.max()), float(ba.max()))),
        "rmse": math.sqrt((ma + mb) / 2.0),
        "chamfer": ma + mb,
    }


def read_xyz(path: str | Path) -> np.ndarray:
    """Whitespace-separated x y z per line; blank lines and '#' comments skipped."""
    rows = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) < 3:
            raise ValueError(f"{path}:{lineno}: expected three coordinates")
        try:
            rows.append([float(v) for v in parts[:3]])
        except ValueError:
            raise ValueError(f"{path}:{lineno}: non-numeric coordinate") from None
    return as_points(np.array(rows).reshape(-1, 3))
