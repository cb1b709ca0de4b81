"""Pinhole back-projection and projection."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from ..scene_core.types import CameraIntrinsics, DepthMap, Mask2D


class GeometryError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class PointCloud:
    """``(N, 3)`` camera-frame points in meters."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise GeometryError("point cloud contains non-finite coordinates")
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]


def backproject(depth: DepthMap, k: CameraIntrinsics, region: Optional[Mask2D] = None) -> PointCloud:
    """Lift every valid pixel in ``region`` to a 3D point; rows first, then columns."""
    if (depth.width, depth.height) != (k.width, k.height):
        raise GeometryError(
            f"depth {depth.width}x{depth.height} does not match intrinsics {k.width}x{k.height}"
        )
    sel = depth.valid.copy()
    if region is not None:
        if (region.width, region.height) != (depth.width, depth.height):
            raise GeometryError("region mask size does not match depth map")
        sel &= region.decode()
    vs, us = np.nonzero(sel)
    if us.size == 0:
        raise GeometryError("empty region: no valid depth pixels")
    d = depth.depth[vs, us].astype(float)
    x = (us - k.cx) * d / k.fx
    y = (vs - k.cy) * d / k.fy
    return PointCloud(np.stack([x, y, d], axis=1))


def backproject_pixel(u: float, v: float, d: float, k: CameraIntrinsics) -> Tuple[float, float, float]:
    return ((u - k.cx) * d / k.fx, (v - k.cy) * d / k.fy, d)


def project(point: Sequence[float], k: CameraIntrinsics) -> Tuple[float, float]:
    x, y, z = (float(c) for c in point)
    if not z > 0:
        raise GeometryError(f"cannot project point with z={z} (must be > 0)")
    return (k.fx * x / z + k.cx, k.fy * y / z + k.cy)


def project_many(points: np.ndarray, k: CameraIntrinsics) -> np.ndarray:
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if np.any(pts[:, 2] <= 0):
        raise GeometryError("cannot project points with z <= 0")
    u = k.fx * pts[:, 0] / pts[:, 2] + k.cx
    v = k.fy * pts[:, 1] / pts[:, 2] + k.cy
    return np.stack([u, v], axis=1)
