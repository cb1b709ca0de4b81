"""Resolution of caption specs back to scene objects.

This is the self-consistency oracle for referring expressions, so it
recomputes everything from raw box coordinates and shares no selection
code with the caption builder.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

from ..scene_core.types import SceneGraph

_TOL = 1e-9


@dataclass(frozen=True)
class ResolverSpec:
    """Category filter plus an ordered chain of constraints.

    Constraints are tuples: ``("attribute", value)``, ``("ordinal", axis, k)``
    or ``("nearest_to", anchor_category)``.
    """

    category: str
    constraints: Tuple[tuple, ...] = ()

    def to_dict(self) -> dict:
        return {"category": self.category, "constraints": [list(c) for c in self.constraints]}

    @classmethod
    def from_dict(cls, d: dict) -> "ResolverSpec":
        return cls(d["category"], tuple(tuple(c) for c in d.get("constraints", ())))


def _center2d(n):
    return ((n.box.x1 + n.box.x2) / 2.0, (n.box.y1 + n.box.y2) / 2.0)


def _ordinal(nodes, axis: str, k: int):
    coord = {
        "left": lambda n: _center2d(n)[0],
        "right": lambda n: -_center2d(n)[0],
        "top": lambda n: _center2d(n)[1],
        "bottom": lambda n: -_center2d(n)[1],
    }[axis]
    ordered = sorted(nodes, key=coord)
    if k < 1 or k > len(ordered):
        return []
    target = coord(ordered[k - 1])
    # a rank that falls inside a tie group is ambiguous: return the whole group
    return [n for n in ordered if abs(coord(n) - target) <= _TOL]


def _dist(a, b) -> float:
    if a.box3d is not None and b.box3d is not None:
        ca = [(a.box3d.min_x + a.box3d.max_x) / 2, (a.box3d.min_y + a.box3d.max_y) / 2,
              (a.box3d.min_z + a.box3d.max_z) / 2]
        cb = [(b.box3d.min_x + b.box3d.max_x) / 2, (b.box3d.min_y + b.box3d.max_y) / 2,
              (b.box3d.min_z + b.box3d.max_z) / 2]
    else:
        ca, cb = list(_center2d(a)), list(_center2d(b))
    return sum((p - q) ** 2 for p, q in zip(ca, cb)) ** 0.5


def resolve(scene: SceneGraph, spec: ResolverSpec) -> List[str]:
    """Ids of every node matching ``spec``; a unique caption yields exactly one."""
    nodes = [n for n in scene.nodes if n.category == spec.category]
    for c in spec.constraints:
        kind = c[0]
        if kind == "attribute":
            nodes = [n for n in nodes if c[1] in n.attributes]
        elif kind == "ordinal":
            nodes = _ordinal(nodes, c[1], int(c[2]))
        elif kind == "nearest_to":
            anchors = [n for n in scene.nodes if n.category == c[1]]
            if len(anchors) != 1 or not nodes:
                return sorted(n.id for n in nodes) if len(anchors) == 1 else []
            a = anchors[0]
            ds = [(_dist(n, a), n) for n in nodes]
            best = min(d for d, _ in ds)
            nodes = [n for d, n in ds if d <= best + _TOL]
        else:
            raise ValueError(f"unknown resolver constraint {kind!r}")
    return sorted(n.id for n in nodes)


def resolves_uniquely(scene: SceneGraph, spec: ResolverSpec, target: Optional[str] = None) -> bool:
    ids = resolve(scene, spec)
    return len(ids) == 1 and (target is None or ids[0] == target)
