"""Domain types shared by every stage of the pipeline.

All types are frozen dataclasses. Geometry follows the camera convention used
throughout the package: pixel origin top-left, x right, y down; 3D points in
the camera frame with +x right, +y down, +z forward, in meters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Dict, Mapping, Optional, Sequence, Tuple

import numpy as np


class SceneValidationError(ValueError):
    """Raised when scene annotations or items violate their invariants."""


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise SceneValidationError(f"focal lengths must be positive, got fx={self.fx} fy={self.fy}")
        if not (0 <= self.cx <= self.width and 0 <= self.cy <= self.height):
            raise SceneValidationError(
                f"principal point ({self.cx}, {self.cy}) outside {self.width}x{self.height} image"
            )


@dataclass(frozen=True, eq=False)
class DepthMap:
    """Metric depth in meters, row-major ``(height, width)``."""

    width: int
    height: int
    depth: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        if self.depth.shape != (self.height, self.width):
            raise SceneValidationError(
                f"depth shape {self.depth.shape} does not match {self.height}x{self.width}"
            )
        if self.valid.shape != self.depth.shape:
            raise SceneValidationError("validity mask shape mismatch")
        vals = self.depth[self.valid]
        if vals.size and not (np.all(np.isfinite(vals)) and np.all(vals > 0)):
            raise SceneValidationError("valid depths must be finite and positive")

    @classmethod
    def from_array(cls, depth: np.ndarray) -> "DepthMap":
        depth = np.asarray(depth, dtype=np.float32)
        with np.errstate(invalid="ignore"):
            valid = np.isfinite(depth) & (depth > 0)
        return cls(width=depth.shape[1], height=depth.shape[0], depth=depth, valid=valid)


@dataclass(frozen=True)
class Box2D:
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise SceneValidationError(f"box inversion: ({self.x1}, {self.y1}, {self.x2}, {self.y2})")

    @property
    def center(self) -> Tuple[float, float]:
        return ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)

    def clamp(self, width: int, height: int) -> "Box2D":
        return Box2D(
            min(max(self.x1, 0.0), width),
            min(max(self.y1, 0.0), height),
            min(max(self.x2, 0.0), width),
            min(max(self.y2, 0.0), height),
        )

    def to_list(self) -> list:
        return [self.x1, self.y1, self.x2, self.y2]


@dataclass(frozen=True)
class Mask2D:
    """Run-length encoded binary mask.

    ``counts`` alternate background/foreground run lengths over the row-major
    flattening of the mask, starting with a (possibly zero) background run.
    """

    width: int
    height: int
    counts: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))
        if any(c < 0 for c in self.counts):
            raise SceneValidationError("negative run length in mask")
        if sum(self.counts) != self.width * self.height:
            raise SceneValidationError(
                f"mask runs sum to {sum(self.counts)}, expected {self.width * self.height}"
            )
        if sum(self.counts[1::2]) == 0:
            raise SceneValidationError("mask has empty foreground")

    def decode(self) -> np.ndarray:
        flat = np.zeros(self.width * self.height, dtype=bool)
        pos = 0
        for i, run in enumerate(self.counts):
            if i % 2 == 1:
                flat[pos:pos + run] = True
            pos += run
        return flat.reshape(self.height, self.width)

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "Mask2D":
        arr = np.asarray(arr, dtype=bool)
        flat = arr.ravel()
        # run boundaries, with a leading zero-length background run if needed
        change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
        edges = np.concatenate(([0], change, [flat.size]))
        counts = np.diff(edges).tolist()
        if flat.size and flat[0]:
            counts = [0] + counts
        return cls(width=arr.shape[1], height=arr.shape[0], counts=tuple(counts))

    def area(self) -> int:
        return int(sum(self.counts[1::2]))

    def centroid(self) -> Tuple[float, float]:
        ys, xs = np.nonzero(self.decode())
        return (float(xs.mean()), float(ys.mean()))

    def contains(self, x: float, y: float) -> bool:
        col, row = int(math.floor(x)), int(math.floor(y))
        if not (0 <= col < self.width and 0 <= row < self.height):
            return False
        return bool(self.decode()[row, col])

    def to_dict(self) -> dict:
        return {"width": self.width, "height": self.height, "counts": list(self.counts)}


@dataclass(frozen=True)
class Box3D:
    min_x: float
    min_y: float
    min_z: float
    max_x: float
    max_y: float
    max_z: float

    def __post_init__(self):
        if not (self.min_x < self.max_x and self.min_y < self.max_y and self.min_z < self.max_z):
            raise SceneValidationError(f"3D box inversion: {self.to_list()}")

    @property
    def center(self) -> Tuple[float, float, float]:
        return (
            (self.min_x + self.max_x) / 2.0,
            (self.min_y + self.max_y) / 2.0,
            (self.min_z + self.max_z) / 2.0,
        )

    @property
    def extent(self) -> Tuple[float, float, float]:
        return (self.max_x - self.min_x, self.max_y - self.min_y, self.max_z - self.min_z)

    @property
    def volume(self) -> float:
        ex, ey, ez = self.extent
        return ex * ey * ez

    def corners(self) -> np.ndarray:
        xs = (self.min_x, self.max_x)
        ys = (self.min_y, self.max_y)
        zs = (self.min_z, self.max_z)
        return np.array([(x, y, z) for x in xs for y in ys for z in zs], dtype=float)

    def to_list(self) -> list:
        return [self.min_x, self.min_y, self.min_z, self.max_x, self.max_y, self.max_z]


@dataclass(frozen=True)
class PartAnnotation:
    """Named functional sub-region of an object, e.g. the handle of a handbag."""

    name: str
    box: Box2D
    affordance: str = ""


@dataclass(frozen=True)
class ObjectNode:
    id: str
    category: str
    box: Box2D
    mask: Optional[Mask2D] = None
    points_ref: Optional[str] = None
    box3d: Optional[Box3D] = None
    attributes: Tuple[str, ...] = ()
    captions: Mapping[str, str] = field(default_factory=dict)
    parts: Tuple[PartAnnotation, ...] = ()
    functions: Tuple[str, ...] = ()
    facing_deg: Optional[float] = None

    def anchor_point(self) -> Tuple[float, float]:
        """Point used as ground truth for this region: mask centroid, else box center.

        A centroid that falls off a non-convex mask is snapped to the nearest
        foreground pixel so the point is always inside the region.
        """
        if self.mask is None:
            return self.box.center
        cx, cy = self.mask.centroid()
        arr = self.mask.decode()
        rx, ry = int(math.floor(cx + 0.5)), int(math.floor(cy + 0.5))
        if 0 <= ry < arr.shape[0] and 0 <= rx < arr.shape[1] and arr[ry, rx]:
            return (cx, cy)
        ys, xs = np.nonzero(arr)
        d2 = (xs - cx) ** 2 + (ys - cy) ** 2
        # lexicographic (row, col) among equally near pixels
        best = np.lexsort((xs, ys, d2))[0]
        return (float(xs[best]), float(ys[best]))


@dataclass(frozen=True)
class RelationEdge:
    subject: str
    object: str
    concept: str
    value: Optional[float] = None
    unit: Optional[str] = None

    def __post_init__(self):
        if self.subject == self.object:
            raise SceneValidationError(f"self-relation on {self.subject}")


@dataclass(frozen=True)
class EmbodimentEntry:
    """One location in the embodiment block, e.g. ``KitchenTable1`` of type ``table``."""

    name: str
    type: str
    objects: Tuple[str, ...] = ()
    robot: Optional[str] = None


@dataclass(frozen=True)
class PointAnnotation:
    """Raw point labels for one (source, label) group, prior to cleaning."""

    source_id: str
    label: str
    points: Tuple[Tuple[float, float], ...]


@dataclass(frozen=True)
class SceneGraph:
    scene_id: str
    image_width: int
    image_height: int
    nodes: Tuple[ObjectNode, ...]
    edges: Tuple[RelationEdge, ...] = ()
    frames: Tuple[str, ...] = ()
    embodiment: Tuple[EmbodimentEntry, ...] = ()
    intrinsics: Optional[CameraIntrinsics] = None
    depth_ref: Optional[str] = None
    gravity_rotation: Optional[Tuple[Tuple[float, float, float], ...]] = None
    point_annotations: Tuple[PointAnnotation, ...] = ()

    def __post_init__(self):
        ids = [n.id for n in self.nodes]
        seen = set()
        for i in ids:
            if i in seen:
                raise SceneValidationError(f"duplicate node id {i}")
            seen.add(i)
        for e in self.edges:
            for end in (e.subject, e.object):
                if end not in seen:
                    raise SceneValidationError(f"dangling endpoint {end}")
        cats = {n.category for n in self.nodes}
        for entry in self.embodiment:
            for obj in entry.objects:
                if obj not in cats:
                    raise SceneValidationError(
                        f"embodiment entry {entry.name} references unknown category {obj}"
                    )

    def node(self, node_id: str) -> ObjectNode:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)

    def by_category(self, category: str) -> Tuple[ObjectNode, ...]:
        return tuple(n for n in self.nodes if n.category == category)

    @property
    def image_ref(self) -> str:
        return self.frames[0] if self.frames else f"{self.scene_id}.jpg"


FAMILIES = (
    "pointing",
    "grounding",
    "affordance",
    "referring",
    "placement",
    "spatial_mc",
    "trajectory",
    "egoplan",
    "multirobot",
    "closeloop",
)

TARGET_KINDS = ("points", "box", "trajectory", "option", "free_text", "workflow", "action")


def _is_number(v: Any) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _check_points(payload: Any, width: Optional[int], height: Optional[int]) -> None:
    if not isinstance(payload, list) or not payload:
        raise SceneValidationError("point payload must be a nonempty list")
    for p in payload:
        if not (isinstance(p, list) and len(p) == 2 and all(_is_number(c) for c in p)):
            raise SceneValidationError(f"malformed point {p!r}")
        if width is not None and not (0 <= p[0] <= width - 1 and 0 <= p[1] <= height - 1):
            raise SceneValidationError(f"point {p} outside {width}x{height} image")


def validate_payload(kind: str, payload: Any, width: Optional[int] = None,
                     height: Optional[int] = None) -> None:
    """Check that ``payload`` has the JSON shape required by ``kind``."""
    if kind in ("points", "trajectory"):
        _check_points(payload, width, height)
    elif kind == "box":
        if not (isinstance(payload, list) and len(payload) == 4 and all(_is_number(c) for c in payload)):
            raise SceneValidationError(f"malformed box {payload!r}")
        x1, y1, x2, y2 = payload
        if not (x1 < x2 and y1 < y2):
            raise SceneValidationError(f"box inversion {payload}")
        if width is not None and not (0 <= x1 and 0 <= y1 and x2 <= width and y2 <= height):
            raise SceneValidationError(f"box {payload} outside {width}x{height} image")
    elif kind == "option":
        if not (isinstance(payload, str) and len(payload) == 1 and payload.isupper()):
            raise SceneValidationError(f"option must be a single capital letter, got {payload!r}")
    elif kind in ("free_text", "action"):
        if not isinstance(payload, str) or not payload.strip():
            raise SceneValidationError(f"{kind} payload must be a nonempty string")
    elif kind == "workflow":
        if not (isinstance(payload, dict) and isinstance(payload.get("nodes"), list)
                and isinstance(payload.get("edges"), list)):
            raise SceneValidationError("workflow payload needs 'nodes' and 'edges' lists")
    else:
        raise SceneValidationError(f"unknown target kind {kind!r}")


@dataclass(frozen=True)
class QAItem:
    """One synthesized task instance.

    ``answer`` is stored in its JSON form (lists, strings, dicts) so that a
    shard round-trip reproduces the item exactly.
    """

    item_id: str
    family: str
    prompt: str
    images: Tuple[str, ...]
    target_kind: str
    answer: Any
    image_size: Optional[Tuple[int, int]] = None
    provenance: Mapping[str, Any] = field(default_factory=dict)
    meta: Mapping[str, Any] = field(default_factory=dict)

    def validate(self) -> "QAItem":
        if self.family not in FAMILIES:
            raise SceneValidationError(f"unknown task family {self.family!r}")
        if self.target_kind not in TARGET_KINDS:
            raise SceneValidationError(f"unknown target kind {self.target_kind!r}")
        if not self.item_id:
            raise SceneValidationError("empty item id")
        w, h = self.image_size if self.image_size is not None else (None, None)
        validate_payload(self.target_kind, self.answer, w, h)
        return self

    def to_dict(self) -> Dict[str, Any]:
        return {
            "item_id": self.item_id,
            "family": self.family,
            "prompt": self.prompt,
            "images": list(self.images),
            "target_kind": self.target_kind,
            "answer": self.answer,
            "image_size": list(self.image_size) if self.image_size is not None else None,
            "provenance": dict(self.provenance),
            "meta": dict(self.meta),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "QAItem":
        size = d.get("image_size")
        return cls(
            item_id=d["item_id"],
            family=d["family"],
            prompt=d["prompt"],
            images=tuple(d.get("images", ())),
            target_kind=d["target_kind"],
            answer=d["answer"],
            image_size=tuple(size) if size is not None else None,
            provenance=dict(d.get("provenance", {})),
            meta=dict(d.get("meta", {})),
        )


def as_point_list(points: Sequence[Sequence[float]]) -> list:
    return [[p[0], p[1]] for p in points]
