"""Seeded synthetic tabletop/room scenes for tests, demos and property checks.

Objects stand on a floor plane at camera height ``FLOOR_Y`` with
non-overlapping ground footprints; 2D boxes are the integer hull of the
projected 3D box corners, so geometry and image annotations agree.
"""

from __future__ import annotations

import math
import random
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .types import (
    Box2D,
    Box3D,
    CameraIntrinsics,
    Mask2D,
    ObjectNode,
    PartAnnotation,
    PointAnnotation,
    SceneGraph,
)

FLOOR_Y = 0.5
DEFAULT_K = CameraIntrinsics(500.0, 500.0, 320.0, 240.0, 640, 480)

# category -> (width, height, depth) in meters
SIZES: Dict[str, Tuple[float, float, float]] = {
    "cup": (0.08, 0.10, 0.08),
    "mug": (0.10, 0.10, 0.09),
    "book": (0.16, 0.04, 0.24),
    "bottle": (0.07, 0.25, 0.07),
    "bowl": (0.16, 0.07, 0.16),
    "box": (0.30, 0.25, 0.30),
    "chair": (0.45, 0.90, 0.45),
    "handbag": (0.32, 0.26, 0.14),
    "mouse": (0.07, 0.04, 0.11),
    "knife": (0.22, 0.02, 0.03),
    "lamp": (0.25, 0.55, 0.25),
    "laptop": (0.34, 0.24, 0.24),
    "plant": (0.30, 0.60, 0.30),
    "sink": (0.55, 0.30, 0.45),
    "sofa": (1.10, 0.80, 0.70),
}

# category -> (part name, affordance phrase, relative box (x1, y1, x2, y2) in the object box)
PARTS: Dict[str, Tuple[str, str, Tuple[float, float, float, float]]] = {
    "handbag": ("handle", "grasped to carry it", (0.25, 0.0, 0.75, 0.3)),
    "mug": ("handle", "grasped to lift it", (0.7, 0.2, 1.0, 0.8)),
    "knife": ("handle", "held to cut with it", (0.0, 0.0, 0.45, 1.0)),
    "cup": ("rim", "sipped from", (0.0, 0.0, 1.0, 0.2)),
    "chair": ("seat", "sat on", (0.0, 0.45, 1.0, 0.65)),
}

FUNCTIONS: Dict[str, str] = {
    "mouse": "be moved to control the cursor on a screen",
    "knife": "cut food into slices",
    "lamp": "light up a dark room",
    "bottle": "hold water for drinking",
    "laptop": "be used to type an email",
    "sofa": "let several people sit and relax",
    "plant": "add some greenery to the room",
    "bowl": "hold soup or cereal",
}

COLORS = ("red", "blue", "green", "white", "black", "yellow", "gray", "brown")

_X_RANGE = (-1.2, 1.2)
_Z_RANGE = (2.0, 4.5)
_GAP = 0.15


def _project_box(b: Box3D, k: CameraIntrinsics) -> Box2D:
    c = b.corners()
    u = k.fx * c[:, 0] / c[:, 2] + k.cx
    v = k.fy * c[:, 1] / c[:, 2] + k.cy
    return Box2D(float(math.floor(u.min())), float(math.floor(v.min())),
                 float(math.ceil(u.max())), float(math.ceil(v.max())))


def ellipse_mask(box: Box2D, width: int, height: int) -> Mask2D:
    """Ellipse inscribed in ``box`` (pixel centers tested), never empty."""
    ys, xs = np.mgrid[0:height, 0:width]
    cx, cy = box.center
    rx = max((box.x2 - box.x1) / 2.0, 0.5)
    ry = max((box.y2 - box.y1) / 2.0, 0.5)
    arr = ((xs + 0.5 - cx) / rx) ** 2 + ((ys + 0.5 - cy) / ry) ** 2 <= 1.0
    if not arr.any():
        arr[min(int(cy), height - 1), min(int(cx), width - 1)] = True
    return Mask2D.from_array(arr)


def _overlaps(fp, others) -> bool:
    x0, x1, z0, z1 = fp
    return any(x0 < b[1] + _GAP and b[0] < x1 + _GAP and z0 < b[3] + _GAP and b[2] < z1 + _GAP
               for b in others)


def random_scene(
    seed: int,
    n_categories: Tuple[int, int] = (3, 6),
    max_repeat: int = 4,
    masks: bool = False,
    point_annotations: bool = False,
    categories: Optional[Sequence[str]] = None,
    scene_id: Optional[str] = None,
) -> SceneGraph:
    """Build a random but physically consistent scene.

    Placement is by rejection sampling; objects that cannot be placed after a
    bounded number of tries are dropped, so the result may hold fewer
    objects than requested.
    """
    rng = random.Random(seed)
    k = DEFAULT_K
    pool = sorted(categories) if categories is not None else sorted(SIZES)
    cats = rng.sample(pool, min(len(pool), rng.randint(*n_categories)))
    wanted: List[str] = []
    for c in cats:
        wanted.extend([c] * (rng.randint(2, max_repeat) if rng.random() < 0.5 else 1))

    footprints: List[Tuple[float, float, float, float]] = []
    nodes: List[ObjectNode] = []
    counter: Dict[str, int] = {}
    for cat in wanted:
        w, h, d = SIZES[cat]
        s = rng.uniform(0.85, 1.15)
        w, h, d = w * s, h * s, d * s
        for _ in range(60):
            x = rng.uniform(_X_RANGE[0] + w / 2, _X_RANGE[1] - w / 2)
            z = rng.uniform(_Z_RANGE[0] + d / 2, _Z_RANGE[1] - d / 2)
            fp = (x - w / 2, x + w / 2, z - d / 2, z + d / 2)
            if _overlaps(fp, footprints):
                continue
            b3 = Box3D(round(fp[0], 4), round(FLOOR_Y - h, 4), round(fp[2], 4),
                       round(fp[1], 4), FLOOR_Y, round(fp[3], 4))
            box = _project_box(b3, k)
            if box.x1 < 0 or box.y1 < 0 or box.x2 > k.width or box.y2 > k.height:
                continue
            break
        else:
            continue
        footprints.append(fp)
        counter[cat] = counter.get(cat, 0) + 1
        nid = f"{cat}_{counter[cat]}"
        parts = ()
        if cat in PARTS:
            name, aff, (a, b, c_, d_) = PARTS[cat]
            bw, bh = box.x2 - box.x1, box.y2 - box.y1
            pb = Box2D(float(math.floor(box.x1 + a * bw)), float(math.floor(box.y1 + b * bh)),
                       float(math.ceil(box.x1 + c_ * bw)), float(math.ceil(box.y1 + d_ * bh)))
            parts = (PartAnnotation(name, pb, aff),)
        funcs = (FUNCTIONS[cat],) if cat in FUNCTIONS else ()
        nodes.append(ObjectNode(
            id=nid,
            category=cat,
            box=box,
            mask=ellipse_mask(box, k.width, k.height) if masks else None,
            box3d=b3,
            attributes=(rng.choice(COLORS),),
            parts=parts,
            functions=funcs,
            facing_deg=float(rng.choice((0, 90, 180, 270))),
        ))

    anns: List[PointAnnotation] = []
    if point_annotations:
        for cat in sorted(counter):
            inst = [n for n in nodes if n.category == cat]
            npts = rng.randint(1, 14)
            pts = []
            for i in range(npts):
                node = inst[i % len(inst)]
                if node.mask is not None:
                    # integer pixel coordinates survive rounding and stay on the object
                    rows, cols = np.nonzero(node.mask.decode())
                    j = rng.randrange(len(rows))
                    pts.append((float(cols[j]), float(rows[j])))
                else:
                    b = node.box
                    pts.append((round(rng.uniform(b.x1 + 1, b.x2 - 1), 1), round(rng.uniform(b.y1 + 1, b.y2 - 1), 1)))
            anns.append(PointAnnotation(f"src_{seed}_{cat}", cat, tuple(pts)))

    sid = scene_id or f"syn_{seed:06d}"
    return SceneGraph(
        scene_id=sid,
        image_width=k.width,
        image_height=k.height,
        nodes=tuple(nodes),
        frames=(f"{sid}.jpg",),
        intrinsics=k,
        point_annotations=tuple(anns),
    )


def object_on_floor(oid: str, category: str, x: float, z: float,
                    size: Optional[Tuple[float, float, float]] = None,
                    k: CameraIntrinsics = DEFAULT_K, **extra) -> ObjectNode:
    """Single floor-standing object centred at ground position (x, z); handy for hand-built scenes."""
    w, h, d = size if size is not None else SIZES[category]
    b3 = Box3D(x - w / 2, FLOOR_Y - h, z - d / 2, x + w / 2, FLOOR_Y, z + d / 2)
    return ObjectNode(id=oid, category=category, box=_project_box(b3, k), box3d=b3, **extra)
