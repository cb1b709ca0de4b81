"""Evaluation of cataloged spatial concepts against scene geometry.

All qualitative relations are viewer-centric. Ties are broken by
lexicographic object id.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

from ..scene_core import concepts
from ..scene_core.types import ObjectNode, SceneGraph

# Vertical slack when deciding that one box rests on another (meters).
CONTACT_TOL = 0.05


class RelationNotApplicable(ValueError):
    """The concept cannot be evaluated with the geometry available."""


@dataclass(frozen=True)
class RelationQuery:
    concept: str
    subject: Optional[str] = None
    object: Optional[str] = None
    objects: Tuple[str, ...] = ()


@dataclass(frozen=True)
class RelationResult:
    concept: str
    value: Union[bool, float, int, str]
    unit: Optional[str]
    frame: str
    tied: bool = False


def _center(node: ObjectNode, need_3d: bool) -> Tuple[Tuple[float, ...], str]:
    if node.box3d is not None:
        return node.box3d.center, "camera_3d"
    if need_3d:
        raise RelationNotApplicable(f"object {node.id} has no 3D box")
    return node.box.center, "image_2d"


def _pair_centers(a: ObjectNode, b: ObjectNode, need_3d: bool = False):
    if a.box3d is not None and b.box3d is not None:
        return a.box3d.center, b.box3d.center, "camera_3d"
    if need_3d:
        missing = a.id if a.box3d is None else b.id
        raise RelationNotApplicable(f"object {missing} has no 3D box")
    return a.box.center, b.box.center, "image_2d"


def center_distance(a: ObjectNode, b: ObjectNode) -> float:
    ca, cb = a.box3d.center, b.box3d.center  # type: ignore[union-attr]
    return math.dist(ca, cb)


def bearing_sector(dx: float, dz: float) -> str:
    """8-way bearing of a ground-plane displacement (+z forward = front)."""
    angle = math.degrees(math.atan2(dx, dz)) % 360.0
    sector = int(math.floor((angle + 22.5) / 45.0)) % 8
    return concepts.DIRECTION[sector]


def _candidates(scene: SceneGraph, query: RelationQuery, exclude: Optional[str]) -> Sequence[ObjectNode]:
    if query.objects:
        nodes = [scene.node(i) for i in query.objects]
    else:
        nodes = list(scene.nodes)
    return [n for n in nodes if n.id != exclude]


def _extreme(values, largest: bool):
    """Pick (id, value) of the extreme entry; ties by id. Returns (id, value, tied)."""
    if not values:
        raise RelationNotApplicable("no candidate objects")
    best = max(v for _, v in values) if largest else min(v for _, v in values)
    winners = sorted(i for i, v in values if abs(v - best) <= 1e-9)
    return winners[0], best, len(winners) > 1


def ordinal_key_2d(node: ObjectNode, axis: str) -> float:
    cx, cy = node.box.center
    return {"left": cx, "right": -cx, "top": cy, "bottom": -cy}[axis]


def ordinal_rank(scene: SceneGraph, category: str, axis: str, k: int) -> str:
    """Id of the ``k``-th (1-based) instance of ``category`` counted from ``axis``.

    Instances are ordered by 2D box center; ties fall back to object id.
    """
    if axis not in ("left", "right", "top", "bottom"):
        raise ValueError(f"unknown ordinal axis {axis!r}")
    inst = [n for n in scene.nodes if n.category == category]
    if k < 1 or len(inst) < k:
        raise ValueError(f"only {len(inst)} instance(s) of {category!r}, cannot take rank {k}")
    inst.sort(key=lambda n: (ordinal_key_2d(n, axis), n.id))
    return inst[k - 1].id


def evaluate_relation(scene: SceneGraph, query: RelationQuery) -> RelationResult:
    tag = query.concept
    if not concepts.is_cataloged(tag):
        raise ValueError(f"concept {tag!r} not in catalog")
    fam = concepts.family_of(tag)
    subj = scene.node(query.subject) if query.subject is not None else None
    obj = scene.node(query.object) if query.object is not None else None

    def need_pair():
        if subj is None or obj is None:
            raise RelationNotApplicable(f"{tag} needs a subject and an object")
        return subj, obj

    if tag in ("left_of", "right_of"):
        s, o = need_pair()
        cs, co, frame = _pair_centers(s, o)
        val = cs[0] < co[0] if tag == "left_of" else cs[0] > co[0]
        return RelationResult(tag, bool(val), None, frame)
    if tag in ("above", "below"):
        s, o = need_pair()
        cs, co, frame = _pair_centers(s, o)
        # y grows downward
        val = cs[1] < co[1] if tag == "above" else cs[1] > co[1]
        return RelationResult(tag, bool(val), None, frame)
    if tag in ("in_front_of", "behind"):
        s, o = need_pair()
        cs, co, frame = _pair_centers(s, o, need_3d=True)
        val = cs[2] < co[2] if tag == "in_front_of" else cs[2] > co[2]
        return RelationResult(tag, bool(val), None, frame)
    if tag == "on_top_of":
        s, o = need_pair()
        if s.box3d is None or o.box3d is None:
            raise RelationNotApplicable("on_top_of needs 3D boxes")
        a, b = s.box3d, o.box3d
        overlap = a.min_x < b.max_x and b.min_x < a.max_x and a.min_z < b.max_z and b.min_z < a.max_z
        resting = abs(a.max_y - b.min_y) <= CONTACT_TOL
        return RelationResult(tag, bool(overlap and resting), None, "camera_3d")
    if tag == "inside":
        s, o = need_pair()
        if s.box3d is not None and o.box3d is not None:
            a, b = s.box3d, o.box3d
            val = (b.min_x <= a.min_x and a.max_x <= b.max_x and b.min_y <= a.min_y
                   and a.max_y <= b.max_y and b.min_z <= a.min_z and a.max_z <= b.max_z)
            return RelationResult(tag, bool(val), None, "camera_3d")
        a2, b2 = s.box, o.box
        val = b2.x1 <= a2.x1 and a2.x2 <= b2.x2 and b2.y1 <= a2.y1 and a2.y2 <= b2.y2
        return RelationResult(tag, bool(val), None, "image_2d")
    if tag == "between":
        if subj is None or len(query.objects) != 2:
            raise RelationNotApplicable("between needs a subject and exactly two reference objects")
        a, b = (scene.node(i) for i in query.objects)
        nodes = (subj, a, b)
        frame = "camera_3d" if all(n.box3d is not None for n in nodes) else "image_2d"
        xs = [(n.box3d.center if frame == "camera_3d" else n.box.center)[0] for n in nodes]  # type: ignore[union-attr]
        lo, hi = sorted(xs[1:])
        return RelationResult(tag, bool(lo < xs[0] < hi), None, frame)

    if fam == "direction":
        s, o = need_pair()
        cs, co, frame = _pair_centers(s, o, need_3d=True)
        sector = bearing_sector(cs[0] - co[0], cs[2] - co[2])
        return RelationResult(tag, sector == tag, None, "ground_plane")

    if tag in ("distance", "horizontal_distance", "vertical_distance"):
        s, o = need_pair()
        cs, co, _ = _pair_centers(s, o, need_3d=True)
        if tag == "distance":
            val = math.dist(cs, co)
        elif tag == "horizontal_distance":
            val = math.hypot(cs[0] - co[0], cs[2] - co[2])
        else:
            val = abs(cs[1] - co[1])
        return RelationResult(tag, float(val), "m", "camera_3d")
    if tag in ("nearest", "farthest"):
        if subj is None:
            raise RelationNotApplicable(f"{tag} needs a subject")
        _center(subj, need_3d=True)
        cands = [n for n in _candidates(scene, query, subj.id) if n.box3d is not None]
        values = [(n.id, center_distance(subj, n)) for n in cands]
        nid, _, tied = _extreme(values, largest=(tag == "farthest"))
        return RelationResult(tag, nid, None, "camera_3d", tied)

    if tag in ("wider_than", "taller_than", "deeper_than", "larger_than"):
        s, o = need_pair()
        axis = {"wider_than": 0, "taller_than": 1, "deeper_than": 2}.get(tag)
        if s.box3d is not None and o.box3d is not None:
            if axis is None:
                val = s.box3d.volume > o.box3d.volume
            else:
                val = s.box3d.extent[axis] > o.box3d.extent[axis]
            return RelationResult(tag, bool(val), None, "camera_3d")
        if tag == "deeper_than":
            raise RelationNotApplicable("deeper_than needs 3D boxes")
        ext = lambda n: (n.box.x2 - n.box.x1, n.box.y2 - n.box.y1)  # noqa: E731
        if axis is None:
            val = s.box.area > o.box.area
        else:
            val = ext(s)[axis] > ext(o)[axis]
        return RelationResult(tag, bool(val), None, "image_2d")
    if tag in ("width_of", "height_of", "depth_of"):
        if subj is None or subj.box3d is None:
            raise RelationNotApplicable(f"{tag} needs a subject with a 3D box")
        axis = {"width_of": 0, "height_of": 1, "depth_of": 2}[tag]
        return RelationResult(tag, float(subj.box3d.extent[axis]), "m", "camera_3d")
    if tag in ("tallest", "shortest", "largest", "smallest"):
        cands = list(_candidates(scene, query, None))
        if subj is not None and subj.id not in {n.id for n in cands}:
            cands.append(subj)
        if all(n.box3d is not None for n in cands):
            frame = "camera_3d"
            if tag in ("tallest", "shortest"):
                values = [(n.id, n.box3d.extent[1]) for n in cands]  # type: ignore[union-attr]
            else:
                values = [(n.id, n.box3d.volume) for n in cands]  # type: ignore[union-attr]
        else:
            frame = "image_2d"
            if tag in ("tallest", "shortest"):
                values = [(n.id, n.box.y2 - n.box.y1) for n in cands]
            else:
                values = [(n.id, n.box.area) for n in cands]
        nid, _, tied = _extreme(values, largest=tag in ("tallest", "largest"))
        return RelationResult(tag, nid, None, frame, tied)

    if fam == "ordinal":
        if subj is None:
            raise RelationNotApplicable(f"{tag} needs a subject")
        cands = list(_candidates(scene, query, None))
        if subj.id not in {n.id for n in cands}:
            cands.append(subj)
        if tag == "kth_from_front":
            if not all(n.box3d is not None for n in cands):
                raise RelationNotApplicable("kth_from_front needs 3D boxes")
            key = lambda n: n.box3d.center[2]  # noqa: E731
            frame = "camera_3d"
        else:
            axis = {"kth_from_left": "left", "kth_from_right": "right", "kth_from_top": "top"}[tag]
            key = lambda n: ordinal_key_2d(n, axis)  # noqa: E731
            frame = "image_2d"
        ordered = sorted(cands, key=lambda n: (key(n), n.id))
        rank = [n.id for n in ordered].index(subj.id) + 1
        tied = sum(1 for n in cands if abs(key(n) - key(subj)) <= 1e-9) > 1
        return RelationResult(tag, rank, "ordinal", frame, tied)

    if fam == "orientation":
        s, o = need_pair()
        if s.facing_deg is None:
            raise RelationNotApplicable(f"object {s.id} has no facing annotation")
        cs, co, _ = _pair_centers(s, o, need_3d=True)
        to_obj = math.degrees(math.atan2(co[0] - cs[0], co[2] - cs[2]))
        diff = abs((to_obj - s.facing_deg + 180.0) % 360.0 - 180.0)
        val = diff < 45.0 if tag == "facing_toward" else diff > 135.0
        return RelationResult(tag, bool(val), None, "ground_plane")

    if fam == "vacancy":
        raise RelationNotApplicable(f"{tag} is evaluated against an occupancy grid (see sample_placement)")
    raise RelationNotApplicable(f"no evaluator for {tag}")
