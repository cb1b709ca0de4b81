"""Point-annotation cleaning: source-level discard, answer resampling, coordinate conversion."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import List, Literal, Sequence, Tuple

from .io import derive_seed
from .types import PointAnnotation

MAX_POINTS = 10


@dataclass(frozen=True)
class CleaningLogEntry:
    source_id: str
    rule: str
    action: str

    def to_dict(self) -> dict:
        return {"source_id": self.source_id, "rule": self.rule, "action": self.action}


@dataclass
class CleanResult:
    kept: List[PointAnnotation] = field(default_factory=list)
    log: List[CleaningLogEntry] = field(default_factory=list)


def round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


def to_pixel(x: float, y: float, width: int, height: int, normalized: bool) -> Tuple[int, int]:
    if normalized:
        x, y = x * width, y * height
    px = min(max(round_half_up(x), 0), width - 1)
    py = min(max(round_half_up(y), 0), height - 1)
    return px, py


def resample_indices(n: int, k: int, seed: int) -> List[int]:
    """Uniform sample of ``k`` of ``n`` indices without replacement, returned in original order."""
    if n <= k:
        return list(range(n))
    return sorted(random.Random(seed).sample(range(n), k))


def clean_point_annotations(
    raw: Sequence[PointAnnotation],
    width: int,
    height: int,
    max_points: int = MAX_POINTS,
    coord_mode: Literal["normalized", "absolute"] = "absolute",
    policy: Literal["discard", "resample"] = "discard",
    seed: int = 0,
) -> CleanResult:
    """Clean raw point labels for one image.

    ``policy="discard"`` drops any (source, label) group with more than
    ``max_points`` points; ``policy="resample"`` keeps it but samples
    ``max_points`` of them (seeded per group). Output points are integer
    pixels clamped into the image.
    """
    if coord_mode not in ("normalized", "absolute"):
        raise ValueError(f"unknown coord_mode {coord_mode!r}")
    normalized = coord_mode == "normalized"
    result = CleanResult()
    for ann in raw:
        pts = list(ann.points)
        if len(pts) > max_points:
            if policy == "discard":
                result.log.append(CleaningLogEntry(
                    ann.source_id, f"more_than_{max_points}_points", f"discarded label {ann.label!r} ({len(pts)} points)"))
                continue
            idx = resample_indices(len(pts), max_points, derive_seed(ann.source_id, ann.label, seed))
            result.log.append(CleaningLogEntry(
                ann.source_id, f"resample_to_{max_points}", f"kept {max_points} of {len(pts)} points for {ann.label!r}"))
            pts = [pts[i] for i in idx]
        converted = tuple(to_pixel(x, y, width, height, normalized) for x, y in pts)
        if normalized:
            result.log.append(CleaningLogEntry(ann.source_id, "normalized_to_absolute", "converted"))
        result.kept.append(PointAnnotation(ann.source_id, ann.label, converted))
    return result
