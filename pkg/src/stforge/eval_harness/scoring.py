"""Per-item scoring dispatch, predictions, and the verifiable-reward composite."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, Mapping, Optional, Tuple

from ..model_client.grammar import ParseResult, is_well_formed, parse_answer, parse_payload
from ..scene_core.types import QAItem, validate_payload
from .metrics import (
    DegenerateRegion,
    ScoringError,
    action_match,
    affordance_score,
    discrete_frechet,
    plan_components,
    point_in_region_score,
)

COORD_MODES = ("absolute", "normalized", "normalized_1000")

# family -> (metric name, higher is better)
FAMILY_METRIC: Dict[str, Tuple[str, bool]] = {
    "pointing": ("region_accuracy", True),
    "referring": ("region_accuracy", True),
    "placement": ("region_accuracy", True),
    "grounding": ("iou_hit", True),
    "affordance": ("iou_hit", True),
    "trajectory": ("dfd", False),
    "spatial_mc": ("accuracy", True),
    "egoplan": ("accuracy", True),
    "multirobot": ("plan_score", True),
    "closeloop": ("action_accuracy", True),
}


@dataclass(frozen=True)
class Prediction:
    """One model output joined to an item id.

    ``parsed`` holds the payload when ``status`` is ``"ok"``; otherwise
    ``reason`` says why parsing failed.
    """

    item_id: str
    raw_text: Optional[str]
    kind: str
    parsed: Any = None
    status: str = "failed"
    reason: str = ""

    def __post_init__(self):
        if self.status not in ("ok", "failed"):
            raise ValueError(f"bad parse status {self.status!r}")

    @classmethod
    def from_raw(cls, item: QAItem, raw_text: str) -> "Prediction":
        res = parse_answer(raw_text, item.target_kind)
        if not res.ok and item.target_kind == "option" and item.meta.get("options"):
            # an answer that names an option's text instead of its letter
            text = parse_answer(raw_text, "action")
            hits = [i for i, o in enumerate(item.meta["options"]) if text.ok and action_match(text.payload, str(o))]
            if len(hits) == 1:
                return cls(item.item_id, raw_text, "option", chr(ord("A") + hits[0]), "ok")
        return cls._from_result(item.item_id, raw_text, res)

    @classmethod
    def from_payload(cls, item: QAItem, payload: Any) -> "Prediction":
        try:
            validate_payload(item.target_kind, payload)
        except ValueError as exc:
            return cls(item.item_id, None, item.target_kind, None, "failed", str(exc))
        return cls(item.item_id, None, item.target_kind, payload, "ok")

    @classmethod
    def from_record(cls, item: QAItem, record: Mapping[str, Any]) -> "Prediction":
        """Prediction-file record: ``{item_id, raw_text}`` or ``{item_id, payload}``."""
        if "raw_text" in record:
            return cls.from_raw(item, record["raw_text"])
        if "payload" in record:
            return cls.from_payload(item, record["payload"])
        raise ScoringError(f"prediction for {item.item_id} has neither raw_text nor payload")

    @classmethod
    def _from_result(cls, item_id: str, raw: Optional[str], res: ParseResult) -> "Prediction":
        if res.ok:
            return cls(item_id, raw, res.kind, res.payload, "ok")
        return cls(item_id, raw, res.kind, None, "failed", res.reason)

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def to_dict(self) -> dict:
        return {"item_id": self.item_id, "raw_text": self.raw_text, "kind": self.kind,
                "parsed": self.parsed, "status": self.status, "reason": self.reason}


@dataclass(frozen=True)
class ItemScore:
    item_id: str
    family: str
    metric: str
    score: float
    higher_is_better: bool
    diagnostics: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"item_id": self.item_id, "family": self.family, "metric": self.metric, "score": self.score,
                "higher_is_better": self.higher_is_better, "diagnostics": dict(self.diagnostics)}


def to_pixels(points: Any, image_size: Optional[Tuple[int, int]], coord_mode: str) -> list:
    """Map predicted coordinates to absolute pixels under the declared convention."""
    if coord_mode not in COORD_MODES:
        raise ValueError(f"unknown coordinate mode {coord_mode!r}")
    if coord_mode == "absolute":
        return [[float(x), float(y)] for x, y in points]
    if image_size is None:
        raise ScoringError("normalized coordinates need the item's image size")
    w, h = image_size
    div = 1.0 if coord_mode == "normalized" else 1000.0
    return [[float(x) / div * w, float(y) / div * h] for x, y in points]


def _worst(family: str) -> float:
    # trajectories with no usable answer get the largest distance in unit-normalized space
    return 2.0 ** 0.5 if family == "trajectory" else 0.0


def score_item(item: QAItem, pred: Prediction, coord_mode: str = "absolute",
               dfd_normalize: bool = True) -> ItemScore:
    """Score one prediction against its item; parse failures score the worst value."""
    if item.family not in FAMILY_METRIC:
        raise ScoringError(f"no scorer for family {item.family!r}")
    if pred.item_id != item.item_id:
        raise ScoringError(f"prediction {pred.item_id!r} joined to item {item.item_id!r}")
    metric, hib = FAMILY_METRIC[item.family]
    mk = lambda s, **d: ItemScore(item.item_id, item.family, metric, float(s), hib, d)  # noqa: E731
    if not pred.ok:
        return mk(_worst(item.family), parse_status="failed", reason=pred.reason)
    p = pred.parsed
    fam = item.family
    if fam in ("pointing", "referring", "placement") and item.meta.get("region") is None:
        raise ScoringError(f"item {item.item_id} carries no ground-truth region")
    if coord_mode != "absolute" and item.image_size is None:
        raise ScoringError("normalized coordinates need the item's image size")
    try:
        if fam in ("pointing", "referring", "placement"):
            return mk(point_in_region_score(to_pixels(p, item.image_size, coord_mode), item.meta["region"]))
        if fam in ("grounding", "affordance"):
            box = to_pixels([p[:2], p[2:]], item.image_size, coord_mode)
            res = affordance_score(box[0] + box[1], item.answer)
            return mk(1.0 if res["hit"] else 0.0, iou=res["iou"])
        if fam == "trajectory":
            norm = tuple(item.image_size) if dfd_normalize and item.image_size is not None else None
            d = discrete_frechet(to_pixels(p, item.image_size, coord_mode), item.answer, normalize=norm)
            return mk(d, normalized=norm is not None)
        if fam in ("spatial_mc", "egoplan"):
            return mk(1.0 if p == item.answer else 0.0, predicted=p)
        if fam == "multirobot":
            comp = plan_components(p, item.answer)
            return mk(comp["score"], f1=comp["f1"], precedence=comp["precedence"], diagnostic=comp["diagnostic"])
        return mk(1.0 if action_match(p, item.answer) else 0.0, predicted=p)
    except DegenerateRegion:
        raise
    except (ScoringError, TypeError, ValueError) as exc:
        # a payload that parses but cannot be scored (inverted box, malformed graph) counts as wrong
        return mk(_worst(fam), parse_status="unscorable", reason=str(exc))


def ground_truth_prediction(item: QAItem) -> Prediction:
    return Prediction(item.item_id, None, item.target_kind, item.answer, "ok")


@dataclass(frozen=True)
class Reward:
    format: int
    accuracy: float
    composite: float

    def as_tuple(self) -> Tuple[int, float, float]:
        return (self.format, self.accuracy, self.composite)


def rlvr_reward(raw_text: str, item: QAItem, w_acc: float = 1.0, w_fmt: float = 0.1,
                dfd_scale: float = 0.1, coord_mode: str = "absolute") -> Reward:
    """Composite verifiable reward ``w_acc * accuracy + w_fmt * format``; never raises.

    Trajectory accuracy is the inverse-scaled distance ``1 / (1 + dfd / dfd_scale)``.
    """
    fmt = 1 if is_well_formed(raw_text) else 0
    acc = 0.0
    try:
        res = parse_answer(raw_text, item.target_kind)
        if res.ok:
            s = score_item(item, Prediction._from_result(item.item_id, raw_text, res), coord_mode)
            acc = 1.0 / (1.0 + s.score / dfd_scale) if item.family == "trajectory" else s.score
    except Exception:  # worst case is (0, 0, 0), not an error
        acc = 0.0
    return Reward(fmt, acc, w_acc * acc + w_fmt * fmt)


def parse_for(item: QAItem, body: str) -> Prediction:
    """Parse a bare payload string (no tags) for ``item``."""
    return Prediction._from_result(item.item_id, body, parse_payload(body, item.target_kind))
