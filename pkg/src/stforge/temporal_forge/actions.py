"""Closed action vocabulary: rendering, parsing and per-action failure tables."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

from .scenario import TaskScene, display, title

VERBS = ("navigate", "open", "close", "pick", "place", "toggle", "search", "done")

FAILURE_TABLE: Dict[str, Tuple[str, ...]] = {
    "navigate": ("path blocked", "localization lost", "collision detected"),
    "open": ("handle slipped", "door stuck", "grasp failed"),
    "close": ("door bounced back", "grasp failed"),
    "pick": ("slip", "occluded", "out of reach"),
    "place": ("unstable placement", "target occupied", "release failed"),
    "toggle": ("button missed", "switch stuck"),
    "search": ("view occluded", "lighting too dark"),
}


class ActionError(ValueError):
    pass


@dataclass(frozen=True)
class Action:
    """One primitive action. ``target`` is a location, ``obj`` an object, ``state`` is on/off for toggles."""

    verb: str
    target: Optional[str] = None
    obj: Optional[str] = None
    state: Optional[str] = None
    robot: Optional[str] = None

    def __post_init__(self):
        if self.verb not in VERBS:
            raise ActionError(f"unknown action verb {self.verb!r}")
        if self.verb == "toggle" and self.state not in ("on", "off"):
            raise ActionError("toggle needs state 'on' or 'off'")

    def key(self) -> tuple:
        """Identity ignoring the executing robot."""
        return (self.verb, self.target, self.obj, self.state)

    def with_robot(self, robot: Optional[str]) -> "Action":
        return Action(self.verb, self.target, self.obj, self.state, robot)

    def to_dict(self) -> dict:
        return {k: v for k, v in (("verb", self.verb), ("target", self.target), ("obj", self.obj),
                                  ("state", self.state), ("robot", self.robot)) if v is not None}

    @classmethod
    def from_dict(cls, d: dict) -> "Action":
        return cls(d["verb"], d.get("target"), d.get("obj"), d.get("state"), d.get("robot"))


def render_action(action: Action, scene: TaskScene) -> str:
    v = action.verb
    if v == "navigate":
        return f"Navigate to {title(action.target)}"
    if v in ("open", "close", "search"):
        return f"{v.capitalize()} {title(action.target)}"
    if v == "pick":
        return f"Pick up {display(action.obj)}"
    if v == "place":
        if scene.pour_into.get(action.obj) == action.target:
            return f"Pour {display(action.obj)}"
        prep = "in" if scene.location(action.target).openable else "on"
        return f"Put {display(action.obj)} {prep} {title(action.target)}"
    if v == "toggle":
        return f"Toggle {action.state} {title(action.target)}"
    return "Done"


def parse_action(text: str, scene: TaskScene, robot: Optional[str] = None) -> Action:
    """Inverse of :func:`render_action`; case-insensitive, trailing period tolerated."""
    clean = " ".join(text.split()).rstrip(".").strip().lower()
    locs = {display(n).lower(): n for n in scene.location_names}
    objs = {display(n).lower(): n for n in scene.objects}

    def loc(s: str) -> str:
        if s not in locs:
            raise ActionError(f"unknown location {s!r} in action {text!r}")
        return locs[s]

    def obj(s: str) -> str:
        if s not in objs:
            raise ActionError(f"unknown object {s!r} in action {text!r}")
        return objs[s]

    if clean == "done":
        return Action("done", robot=robot)
    if m := re.fullmatch(r"navigate to (.+)", clean):
        return Action("navigate", loc(m.group(1)), robot=robot)
    if m := re.fullmatch(r"(open|close|search) (.+)", clean):
        return Action(m.group(1), loc(m.group(2)), robot=robot)
    if m := re.fullmatch(r"pick up (.+)", clean):
        return Action("pick", obj=obj(m.group(1)), robot=robot)
    if m := re.fullmatch(r"pour (.+)", clean):
        o = obj(m.group(1))
        if o not in scene.pour_into:
            raise ActionError(f"{o} cannot be poured")
        return Action("place", scene.pour_into[o], o, robot=robot)
    if clean.startswith("put "):
        # names may themselves contain "in"/"on" (walk in fridge), so match known names
        rest = clean[4:]
        for o_text, o in objs.items():
            for prep in (" in ", " on "):
                if rest.startswith(o_text + prep) and rest[len(o_text) + len(prep):] in locs:
                    return Action("place", locs[rest[len(o_text) + len(prep):]], o, robot=robot)
    if m := re.fullmatch(r"toggle (on|off) (.+)", clean):
        return Action("toggle", loc(m.group(2)), state=m.group(1), robot=robot)
    raise ActionError(f"action {text!r} outside the vocabulary")


def action_vocabulary(scene: TaskScene) -> List[Action]:
    """Every syntactically valid action over the scene, in a fixed order."""
    out: List[Action] = []
    for l in scene.locations:
        out.append(Action("navigate", l.name))
        out.append(Action("search", l.name))
        if l.openable:
            out += [Action("open", l.name), Action("close", l.name)]
        if l.toggleable:
            out += [Action("toggle", l.name, state="on"), Action("toggle", l.name, state="off")]
    for o in scene.objects:
        out.append(Action("pick", obj=o))
        for l in scene.locations:
            out.append(Action("place", l.name, o))
    out.append(Action("done"))
    return out
