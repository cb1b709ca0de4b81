"""Per-family prompt construction for the ``<think>``/``<answer>`` grammar."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Tuple

from ..scene_core.types import QAItem


class PromptError(ValueError):
    pass


PREAMBLES = {
    "think-v1": ("You are a robot that perceives the scene through the given images. "
                 "Reason about the scene step by step inside <think></think> tags, keeping the reasoning "
                 "short and grounded in what you see. Then give only the final answer inside "
                 "<answer></answer> tags."),
    "answer-v1": ("You are a robot that perceives the scene through the given images. "
                  "Reply with only the final answer inside <answer></answer> tags."),
}

_COORDS = {
    "absolute": "Coordinates are pixel positions in the image.",
    "normalized": "The coordinates should be normalized pixel locations of the points, between 0 and 1.",
    "normalized_1000": "The coordinates should be normalized pixel locations of the points, scaled to 0-1000.",
}

_POINTS = ("Your answer should be formatted as a list of tuples, i.e. [(x1, y1), (x2, y2), ...], "
           "each tuple holding the x and y coordinates of one point.")

_ACTIONS = ("Answer with one action: Navigate to <place>, Open <place>, Close <place>, Search <place>, "
            "Pick up <object>, Put <object> in/on <place>, Pour <object>, Toggle on/off <place>, or Done.")

_WORKFLOW = ('Answer with a JSON object {"nodes": [{"id": ..., "robot": ..., "description": ..., '
             '"rationale": ...}], "edges": [[from_id, to_id], ...]} where each edge means the first '
             "subtask must finish before the second starts.")


@dataclass(frozen=True)
class PromptSpec:
    family: str
    preamble_id: str
    user_text: str
    images: Tuple[str, ...]
    thinking: bool

    @property
    def system_text(self) -> str:
        return PREAMBLES[self.preamble_id]

    def to_dict(self) -> dict:
        return {"family": self.family, "preamble_id": self.preamble_id, "user_text": self.user_text,
                "images": list(self.images), "thinking": self.thinking}

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()


def _user_text(item: QAItem, coord_mode: str) -> str:
    fam, base = item.family, item.prompt.strip()
    if fam in ("pointing", "referring", "placement"):
        return f"{base} {_POINTS} {_COORDS[coord_mode]}"
    if fam == "trajectory":
        return (f'You are a robot arm. The task is "{base.rstrip(".")}". Please predict up to 10 key '
                "trajectory points to complete the task. Your answer should be formatted as a list of "
                f"[x, y] pairs, i.e. [[x1, y1], [x2, y2], ...]. {_COORDS[coord_mode]}")
    if fam in ("grounding", "affordance"):
        return f"{base} Answer with one bounding box [x_min, y_min, x_max, y_max] in pixel coordinates."
    if fam in ("spatial_mc", "egoplan"):
        return f"{base}\nAnswer with the letter of one option, e.g. (A)."
    if fam == "closeloop":
        return f"{base} {_ACTIONS}"
    if fam == "multirobot":
        return f"{base}\n{_WORKFLOW}"
    raise PromptError(f"no prompt template registered for family {fam!r}")


def build_prompt(item: QAItem, thinking: bool = True, coord_mode: str = "absolute") -> PromptSpec:
    """Deterministic prompt for ``item``; without thinking an answer-only reply is requested."""
    if coord_mode not in _COORDS:
        raise PromptError(f"unknown coordinate mode {coord_mode!r}")
    return PromptSpec(item.family, "think-v1" if thinking else "answer-v1", _user_text(item, coord_mode),
                      tuple(item.images), thinking)
