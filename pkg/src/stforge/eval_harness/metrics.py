"""Per-family metrics: region hits, box IoU, discrete Fréchet, option accuracy, plan agreement."""

from __future__ import annotations

import math
import re
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from shapely.geometry import Point, Polygon, box as shapely_box

from ..scene_core.types import Box2D, Mask2D
from ..temporal_forge.validator import workflow_errors


class DegenerateRegion(ValueError):
    pass


class ScoringError(ValueError):
    pass


# --- regions ----------------------------------------------------------------------------


def _region_dict(region: Any) -> Mapping:
    if isinstance(region, Mask2D):
        return {"type": "mask", **region.to_dict()}
    if isinstance(region, Box2D):
        return {"type": "box", "box": region.to_list()}
    if isinstance(region, Polygon):
        return {"type": "polygon", "points": [list(p) for p in region.exterior.coords[:-1]]}
    return region


class _Region:
    """Strict-interior membership test over box, polygon, mask or union regions."""

    def __init__(self, region: Any):
        d = _region_dict(region)
        kind = d.get("type")
        self.kind = kind
        if kind == "union":
            if not d.get("parts"):
                raise DegenerateRegion("empty union region")
            self.parts = [_Region(p) for p in d["parts"]]
        elif kind == "box":
            x1, y1, x2, y2 = d["box"]
            if not (x2 > x1 and y2 > y1):
                raise DegenerateRegion(f"zero-area box {d['box']}")
            self.shape = shapely_box(x1, y1, x2, y2)
        elif kind == "polygon":
            poly = Polygon(d["points"])
            if len(d["points"]) < 3 or not poly.is_valid or poly.area <= 0:
                raise DegenerateRegion("polygon is degenerate or self-intersecting")
            self.shape = poly
        elif kind == "mask":
            try:
                self.mask = Mask2D(d["width"], d["height"], tuple(d["counts"])).decode()
            except ValueError as exc:
                raise DegenerateRegion(f"bad mask: {exc}") from None
        else:
            raise DegenerateRegion(f"unknown region type {kind!r}")

    def contains(self, x: float, y: float) -> bool:
        if self.kind == "union":
            return any(p.contains(x, y) for p in self.parts)
        if self.kind == "mask":
            col, row = math.floor(x), math.floor(y)
            h, w = self.mask.shape
            return 0 <= col < w and 0 <= row < h and bool(self.mask[row, col])
        return self.shape.contains(Point(x, y))


def point_in_region_score(points: Sequence[Sequence[float]], region: Any) -> float:
    """Fraction of ``points`` strictly inside ``region``; an empty prediction scores 0."""
    r = _Region(region)
    if not points:
        return 0.0
    return sum(1 for x, y in points if r.contains(float(x), float(y))) / len(points)


# --- boxes ------------------------------------------------------------------------------


def _box_tuple(b: Any) -> Tuple[float, float, float, float]:
    if isinstance(b, Box2D):
        return (b.x1, b.y1, b.x2, b.y2)
    x1, y1, x2, y2 = (float(v) for v in b)
    if not (x2 > x1 and y2 > y1):
        raise ScoringError(f"invalid box {list(b)}")
    return (x1, y1, x2, y2)


def box_iou(a: Any, b: Any) -> float:
    ax1, ay1, ax2, ay2 = _box_tuple(a)
    bx1, by1, bx2, by2 = _box_tuple(b)
    iw = max(0.0, min(ax2, bx2) - max(ax1, bx1))
    ih = max(0.0, min(ay2, by2) - max(ay1, by1))
    inter = iw * ih
    union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter
    return inter / union


def affordance_score(pred: Any, gt: Any, threshold: float = 0.5) -> Dict[str, Any]:
    iou = box_iou(pred, gt)
    return {"iou": iou, "hit": iou >= threshold}


# --- trajectories -----------------------------------------------------------------------


def discrete_frechet(a: Sequence[Sequence[float]], b: Sequence[Sequence[float]],
                     normalize: Optional[Tuple[float, float]] = None) -> float:
    """Discrete Fréchet distance by the standard coupling dynamic program.

    With ``normalize=(width, height)`` coordinates are first divided by the image size.
    """
    if len(a) == 0 or len(b) == 0:
        raise ScoringError("discrete Fréchet needs two nonempty sequences")
    pa, pb = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if normalize is not None:
        scale = np.asarray(normalize, dtype=float)
        pa, pb = pa / scale, pb / scale
    d = np.sqrt(((pa[:, None, :] - pb[None, :, :]) ** 2).sum(-1))
    n, m = d.shape
    ca = np.empty((n, m))
    ca[0, 0] = d[0, 0]
    for i in range(1, n):
        ca[i, 0] = max(ca[i - 1, 0], d[i, 0])
    for j in range(1, m):
        ca[0, j] = max(ca[0, j - 1], d[0, j])
    for i in range(1, n):
        for j in range(1, m):
            ca[i, j] = max(min(ca[i - 1, j], ca[i - 1, j - 1], ca[i, j - 1]), d[i, j])
    return float(ca[-1, -1])


# --- options ----------------------------------------------------------------------------


def _letter(pred: Any) -> Optional[str]:
    if pred is None:
        return None
    if hasattr(pred, "ok"):
        return pred.payload if pred.ok else None
    return pred


def mc_accuracy(predictions: Mapping[str, Any], items: Iterable[Any]) -> float:
    """Mean exact-letter accuracy; parse failures count as wrong.

    ``predictions`` maps item id to a letter or a parse result.
    """
    items = list(items)
    ids = {it.item_id for it in items}
    stray = sorted(set(predictions) - ids)
    if stray:
        raise ScoringError(f"prediction for unknown item id {stray[0]!r}")
    if not items:
        raise ScoringError("no items to score")
    return sum(1 for it in items if _letter(predictions.get(it.item_id)) == it.answer) / len(items)


# --- plans ------------------------------------------------------------------------------


def _canon(text: str) -> str:
    return re.sub(r"[^a-z0-9 ]", "", " ".join(str(text).lower().split()))


def _reach(ids: Sequence[str], edges: Sequence[Sequence[str]]) -> Dict[str, set]:
    succ = {i: {b for a, b in edges if a == i} for i in ids}
    out = {}
    for i in ids:
        seen, stack = set(), list(succ[i])
        while stack:
            n = stack.pop()
            if n not in seen:
                seen.add(n)
                stack.extend(succ.get(n, ()))
        out[i] = seen
    return out


def _graph(g: Any) -> Mapping:
    return g.to_dict() if hasattr(g, "to_dict") else g


def plan_components(pred: Any, ref: Any) -> Dict[str, Any]:
    """Subtask F1, precedence agreement and their harmonic mean, with diagnostics."""
    p, r = _graph(pred), _graph(ref)
    for name, g in (("prediction", p), ("reference", r)):
        if not isinstance(g, Mapping) or not isinstance(g.get("nodes"), list) or not isinstance(g.get("edges"), list):
            return {"score": 0.0, "f1": 0.0, "precedence": 0.0, "diagnostic": f"invalid: {name} is not a graph"}
        errs = workflow_errors({"nodes": [{k: v for k, v in n.items() if k != "predecessors"} for n in g["nodes"]],
                                "edges": g["edges"]})
        if errs:
            return {"score": 0.0, "f1": 0.0, "precedence": 0.0, "diagnostic": errs[0]}
    key = lambda n: (_canon(n.get("description", "")), str(n.get("robot", "")))  # noqa: E731
    ref_pool: Dict[tuple, List[str]] = {}
    for n in r["nodes"]:
        ref_pool.setdefault(key(n), []).append(n["id"])
    match: Dict[str, str] = {}
    for n in p["nodes"]:
        bucket = ref_pool.get(key(n))
        if bucket:
            match[n["id"]] = bucket.pop(0)
    m, np_, nr = len(match), len(p["nodes"]), len(r["nodes"])
    f1 = 2 * m / (np_ + nr) if np_ + nr else 1.0
    if m < 2:
        prec = 1.0
    else:
        rp = _reach([n["id"] for n in p["nodes"]], p["edges"])
        rr = _reach([n["id"] for n in r["nodes"]], r["edges"])
        agree = total = 0
        pids = sorted(match)
        for i, a in enumerate(pids):
            for b in pids[i + 1:]:
                ra, rb = match[a], match[b]
                pred_rel = (b in rp[a], a in rp[b])
                ref_rel = (rb in rr[ra], ra in rr[rb])
                agree += pred_rel == ref_rel
                total += 1
        prec = agree / total
    score = 0.0 if f1 == 0 or prec == 0 else 2 * f1 * prec / (f1 + prec)
    return {"score": score, "f1": f1, "precedence": prec, "diagnostic": ""}


def plan_score(pred: Any, ref: Any) -> float:
    """Harmonic mean of subtask F1 (description + robot) and precedence agreement on matched subtasks."""
    return plan_components(pred, ref)["score"]


def action_match(pred: str, gt: str) -> bool:
    norm = lambda s: " ".join(str(s).split()).rstrip(".").strip().lower()  # noqa: E731
    return norm(pred) == norm(gt)
