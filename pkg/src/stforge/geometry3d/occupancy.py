"""Top-down occupancy grids and metric free-space placement sampling.

The ground plane is the camera x-z plane (y down), optionally after the
scene's gravity-alignment rotation. Columns run along +x, rows along +z.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..scene_core.types import CameraIntrinsics, SceneGraph
from .camera import GeometryError, project

FREE = -1
UNKNOWN = -2
# Cells whose center is closer than this to the camera plane cannot be projected.
NEAR_PLANE = 0.1
_EPS = 1e-9

DIRECTIONS = ("left", "right", "front", "behind")


class NoFreeCellError(GeometryError):
    def __init__(self, message: str, nearest_feasible: Optional[float] = None):
        super().__init__(message)
        self.nearest_feasible = nearest_feasible


@dataclass(frozen=True)
class Footprint:
    min_x: float
    max_x: float
    min_z: float
    max_z: float
    bottom_y: float
    facing_deg: Optional[float] = None


@dataclass(frozen=True, eq=False)
class OccupancyGrid:
    cell_size: float
    origin: Tuple[float, float]
    rows: int
    cols: int
    cells: np.ndarray
    object_ids: Tuple[str, ...]
    footprints: Dict[str, Footprint] = field(default_factory=dict)
    rotation: Optional[np.ndarray] = None

    def cell_bounds(self, row: int, col: int) -> Tuple[float, float, float, float]:
        x0 = self.origin[0] + col * self.cell_size
        z0 = self.origin[1] + row * self.cell_size
        return x0, x0 + self.cell_size, z0, z0 + self.cell_size

    def cell_center(self, row: int, col: int) -> Tuple[float, float]:
        return (self.origin[0] + (col + 0.5) * self.cell_size,
                self.origin[1] + (row + 0.5) * self.cell_size)

    def cell_of(self, x: float, z: float) -> Tuple[int, int]:
        col = int(math.floor((x - self.origin[0]) / self.cell_size))
        row = int(math.floor((z - self.origin[1]) / self.cell_size))
        return row, col

    def state(self, row: int, col: int) -> int:
        return int(self.cells[row, col])

    def occupied_cells(self, object_id: str) -> List[Tuple[int, int]]:
        fp = self.footprints[object_id]
        out = []
        for r in range(self.rows):
            for c in range(self.cols):
                if _intersects(self.cell_bounds(r, c), fp):
                    out.append((r, c))
        return out

    def to_grid_frame(self, p: np.ndarray) -> np.ndarray:
        return p if self.rotation is None else self.rotation @ p

    def to_camera_frame(self, p: np.ndarray) -> np.ndarray:
        return p if self.rotation is None else self.rotation.T @ p

    def ascii(self) -> str:
        """Debug rendering: '.' free, '?' unknown, letters for objects (row 0 = nearest)."""
        glyphs = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz"
        lines = []
        for r in range(self.rows - 1, -1, -1):
            row = []
            for c in range(self.cols):
                s = self.cells[r, c]
                row.append("." if s == FREE else "?" if s == UNKNOWN else glyphs[s % len(glyphs)])
            lines.append("".join(row))
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "cell_size": self.cell_size,
            "origin": list(self.origin),
            "rows": self.rows,
            "cols": self.cols,
            "object_ids": list(self.object_ids),
            "cells": self.cells.tolist(),
        }


def _intersects(bounds: Tuple[float, float, float, float], fp: Footprint) -> bool:
    x0, x1, z0, z1 = bounds
    return x0 < fp.max_x - _EPS and x1 > fp.min_x + _EPS and z0 < fp.max_z - _EPS and z1 > fp.min_z + _EPS


def build_occupancy(scene: SceneGraph, cell_size: float, margin: float = 0.5) -> OccupancyGrid:
    """Rasterize the ground-plane footprints of every node with a 3D box."""
    if not cell_size > 0:
        raise GeometryError(f"cell_size must be positive, got {cell_size}")
    rot = np.array(scene.gravity_rotation, dtype=float) if scene.gravity_rotation else None
    footprints: Dict[str, Footprint] = {}
    for n in scene.nodes:
        if n.box3d is None:
            continue
        corners = n.box3d.corners()
        if rot is not None:
            corners = corners @ rot.T
        footprints[n.id] = Footprint(
            float(corners[:, 0].min()), float(corners[:, 0].max()),
            float(corners[:, 2].min()), float(corners[:, 2].max()),
            float(corners[:, 1].max()), n.facing_deg,
        )
    if not footprints:
        raise GeometryError(f"scene {scene.scene_id} has no 3D geometry")

    ids = tuple(sorted(footprints))
    min_x = min(f.min_x for f in footprints.values()) - margin
    max_x = max(f.max_x for f in footprints.values()) + margin
    min_z = min(f.min_z for f in footprints.values()) - margin
    max_z = max(f.max_z for f in footprints.values()) + margin
    # snap the origin to a multiple of the cell size so grid-aligned footprints rasterize exactly
    ox = math.floor(min_x / cell_size + _EPS) * cell_size
    oz = math.floor(min_z / cell_size + _EPS) * cell_size
    cols = max(1, int(math.ceil((max_x - ox) / cell_size - _EPS)))
    rows = max(1, int(math.ceil((max_z - oz) / cell_size - _EPS)))

    cells = np.full((rows, cols), FREE, dtype=np.int32)
    zc = oz + (np.arange(rows) + 0.5) * cell_size
    cells[zc < NEAR_PLANE, :] = UNKNOWN
    for idx, oid in enumerate(ids):
        fp = footprints[oid]
        c0 = max(0, int(math.floor((fp.min_x - ox) / cell_size)) - 1)
        c1 = min(cols, int(math.ceil((fp.max_x - ox) / cell_size)) + 1)
        r0 = max(0, int(math.floor((fp.min_z - oz) / cell_size)) - 1)
        r1 = min(rows, int(math.ceil((fp.max_z - oz) / cell_size)) + 1)
        for r in range(r0, r1):
            for c in range(c0, c1):
                x0 = ox + c * cell_size
                z0 = oz + r * cell_size
                if _intersects((x0, x0 + cell_size, z0, z0 + cell_size), fp) and cells[r, c] in (FREE, UNKNOWN):
                    cells[r, c] = idx
    return OccupancyGrid(cell_size, (ox, oz), rows, cols, cells, ids, footprints, rot)


def displacement(fp: Footprint, direction: str, x: float, z: float) -> Tuple[float, float, float, float]:
    """Signed distance beyond the footprint boundary along ``direction``, plus the
    lateral coordinate and the footprint's lateral range."""
    if direction == "right":
        return x - fp.max_x, z, fp.min_z, fp.max_z
    if direction == "left":
        return fp.min_x - x, z, fp.min_z, fp.max_z
    if direction == "behind":
        return z - fp.max_z, x, fp.min_x, fp.max_x
    if direction == "front":
        return fp.min_z - z, x, fp.min_x, fp.max_x
    raise ValueError(f"unknown placement direction {direction!r}")


def in_band(grid: OccupancyGrid, anchor: str, direction: str, offset: float, x: float, z: float) -> bool:
    fp = grid.footprints[anchor]
    d, lat, lo, hi = displacement(fp, direction, x, z)
    half = grid.cell_size / 2.0
    return (offset - half - _EPS <= d <= offset + half + _EPS) and (lo - _EPS <= lat <= hi + _EPS)


@dataclass(frozen=True)
class Placement:
    world: Tuple[float, float, float]
    cell: Tuple[int, int]
    pixel: Optional[Tuple[float, float]] = None


def candidate_cells(grid: OccupancyGrid, anchor: str, direction: str, offset: float) -> List[Tuple[int, int]]:
    out = []
    for r in range(grid.rows):
        for c in range(grid.cols):
            if grid.cells[r, c] != FREE:
                continue
            x, z = grid.cell_center(r, c)
            if in_band(grid, anchor, direction, offset, x, z):
                out.append((r, c))
    return out


def _nearest_feasible(grid: OccupancyGrid, anchor: str, direction: str, offset: float) -> Optional[float]:
    fp = grid.footprints[anchor]
    best = None
    for r in range(grid.rows):
        for c in range(grid.cols):
            if grid.cells[r, c] != FREE:
                continue
            x, z = grid.cell_center(r, c)
            d, lat, lo, hi = displacement(fp, direction, x, z)
            if d >= 0 and lo <= lat <= hi and (best is None or abs(d - offset) < abs(best - offset)):
                best = d
    return best


def sample_placement(
    grid: OccupancyGrid,
    anchor: str,
    direction: str,
    offset: float,
    n: int,
    seed: int,
    intrinsics: Optional[CameraIntrinsics] = None,
) -> List[Placement]:
    """Sample up to ``n`` distinct free cells at ``offset`` meters beyond the anchor
    along ``direction`` (within half a cell), laterally within the anchor's extent.

    Points are cell centers at the anchor's support height. With intrinsics,
    cells whose projection leaves the image are excluded.
    """
    if anchor not in grid.footprints:
        raise GeometryError(f"anchor {anchor} not in occupancy grid")
    if offset < 0 or n < 1:
        raise GeometryError("offset must be >= 0 and n >= 1")
    direction = direction.replace("vacant_", "")
    fp = grid.footprints[anchor]
    cands = []
    for r, c in candidate_cells(grid, anchor, direction, offset):
        x, z = grid.cell_center(r, c)
        world = grid.to_camera_frame(np.array([x, fp.bottom_y, z]))
        pixel = None
        if intrinsics is not None:
            if world[2] <= 0:
                continue
            u, v = project(world, intrinsics)
            if not (0 <= u <= intrinsics.width - 1 and 0 <= v <= intrinsics.height - 1):
                continue
            pixel = (u, v)
        cands.append(Placement(tuple(float(w) for w in world), (r, c), pixel))
    if not cands:
        near = _nearest_feasible(grid, anchor, direction, offset)
        hint = f"; nearest free displacement {near:.3f} m" if near is not None else ""
        raise NoFreeCellError(
            f"no free cell {offset:.3f} m {direction} of {anchor}{hint}", nearest_feasible=near)
    if len(cands) <= n:
        return cands
    idx = sorted(random.Random(seed).sample(range(len(cands)), n))
    return [cands[i] for i in idx]
