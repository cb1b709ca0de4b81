from __future__ import annotations

import numpy as np

from ..scene_core.types import Box3D
from .camera import GeometryError, PointCloud

DEFAULT_TRIM = 0.02
# Half-thickness given to an axis with zero extent (flat clouds).
_FLAT_PAD = 1e-6


def fit_aabb(cloud: PointCloud, trim_quantile: float = DEFAULT_TRIM) -> Box3D:
    """Axis-aligned box of ``cloud`` after trimming ``trim_quantile`` from each tail per axis.

    The trimmed bounds use inward-rounded order statistics: the lower bound
    is the sorted value at index ``ceil(q * (n - 1))`` and the upper bound the
    value at ``floor((1 - q) * (n - 1))``, so a single far outlier in a small
    cloud is removed rather than interpolated toward.
    """
    pts = cloud.points
    if pts.shape[0] < 3:
        raise GeometryError(f"too few points: {pts.shape[0]} (need >= 3)")
    if not 0 <= trim_quantile < 0.5:
        raise GeometryError(f"trim_quantile must be in [0, 0.5), got {trim_quantile}")
    lo = np.quantile(pts, trim_quantile, axis=0, method="higher")
    hi = np.quantile(pts, 1.0 - trim_quantile, axis=0, method="lower")
    if np.all(hi <= lo):
        raise GeometryError("degenerate cloud: zero extent on all axes")
    flat = hi <= lo
    mid = (lo + hi) / 2.0
    lo = np.where(flat, mid - _FLAT_PAD, lo)
    hi = np.where(flat, mid + _FLAT_PAD, hi)
    return Box3D(float(lo[0]), float(lo[1]), float(lo[2]), float(hi[0]), float(hi[1]), float(hi[2]))
