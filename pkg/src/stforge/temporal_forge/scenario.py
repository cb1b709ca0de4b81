"""Scenario templates, goal schemas and seeded scenario instantiation."""

from __future__ import annotations

import itertools
import random
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import yaml

from ..scene_core.io import derive_seed
from ..scene_core.types import Box2D, EmbodimentEntry, ObjectNode, SceneGraph

PACK_VERSION = 1
ENVIRONMENTS = ("household", "supermarket", "restaurant")

# tool name -> simulator action it drives
TOOL_ACTIONS = {
    "navigate": "navigate",
    "pick": "pick",
    "place": "place",
    "open": "open",
    "close": "close",
    "toggle": "toggle",
    "search": "search",
    "done": "done",
    "open_gift_bag": "open",
}
TOOL_PARAMS = {
    "navigate": ("target",),
    "pick": ("object",),
    "place": ("object", "target"),
    "open": ("target",),
    "close": ("target",),
    "toggle": ("target", "state"),
    "search": ("target",),
    "done": (),
    "open_gift_bag": ("target",),
}
CAPACITY = {"single_arm": 1, "dual_arm": 2}


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class GoalSchema:
    name: str
    surface: str
    tools: Tuple[str, ...]
    object_slots: Tuple[str, ...] = ()
    location_slots: Tuple[str, ...] = ()


GOAL_SCHEMAS: Dict[str, GoalSchema] = {
    s.name: s
    for s in (
        GoalSchema("fetch_items", "Give me {a} and {b}", ("navigate", "pick", "place", "done"), ("a", "b")),
        GoalSchema("deliver_items", "Bring {a} and {b} to {dest}", ("navigate", "pick", "place", "done"),
                   ("a", "b"), ("dest",)),
        GoalSchema("cook_and_serve", "Cook {dish} and serve it at {dest}",
                   ("navigate", "pick", "place", "toggle"), ("dish",), ("dest",)),
        GoalSchema("gift_packing", "Pack {item} into the gift bag",
                   ("navigate", "pick", "place", "open_gift_bag"), ("item",)),
        GoalSchema("restock", "Restock {item} on {shelf}", ("navigate", "pick", "place"), ("item",), ("shelf",)),
        GoalSchema("put_away", "Put {item} away in {receptacle}",
                   ("navigate", "pick", "place", "open", "close"), ("item",), ("receptacle",)),
        GoalSchema("switch_on", "Turn on {appliance} after opening {receptacle}",
                   ("navigate", "open", "toggle"), (), ("appliance", "receptacle")),
        GoalSchema("cook_dish", "Prepare and cook {ingredient}", ("navigate", "pick", "place", "toggle"),
                   ("ingredient",)),
    )
}


def display(name: str) -> str:
    """'coffee_machine' -> 'coffee machine'."""
    return name.replace("_", " ")


def title(name: str) -> str:
    return " ".join(w.capitalize() for w in name.split("_"))


def with_article(noun: str) -> str:
    word = display(noun)
    if word.endswith("s") and not word.endswith("ss"):
        return f"some {word}"
    return f"an {word}" if word[0] in "aeiou" else f"a {word}"


@dataclass(frozen=True)
class LocationSpec:
    name: str
    type: str
    pos: Tuple[float, float]
    openable: bool = False
    toggleable: bool = False
    cooks: bool = False
    inside: Optional[str] = None


@dataclass(frozen=True)
class ObjectSpec:
    name: str
    locations: Tuple[str, ...]
    pour_into: Optional[str] = None


@dataclass(frozen=True)
class RobotSpec:
    name: str
    embodiment: str
    tools: Tuple[str, ...]
    location: str

    def __post_init__(self):
        if len(set(self.tools)) != len(self.tools):
            raise ScenarioError(f"robot {self.name}: duplicate tool names")
        unknown = [t for t in self.tools if t not in TOOL_ACTIONS]
        if unknown:
            raise ScenarioError(f"robot {self.name}: unknown tool(s) {unknown}")

    @property
    def capacity(self) -> int:
        return CAPACITY.get(self.embodiment, 1)

    def signature(self) -> Dict[str, Tuple[str, ...]]:
        return {t: TOOL_PARAMS[t] for t in self.tools}

    def to_dict(self) -> dict:
        return {"name": self.name, "embodiment": self.embodiment, "tools": list(self.tools),
                "location": self.location}


@dataclass(frozen=True)
class GoalTemplate:
    schema: str
    slots: Mapping[str, Tuple[str, ...]]

    def combinations(self) -> List[Dict[str, str]]:
        names = sorted(self.slots)
        out = []
        for values in itertools.product(*(self.slots[n] for n in names)):
            combo = dict(zip(names, values))
            objs = [combo[s] for s in GOAL_SCHEMAS[self.schema].object_slots]
            if len(set(objs)) == len(objs):
                out.append(combo)
        return out


@dataclass(frozen=True)
class ScenarioTemplate:
    template_id: str
    environment: str
    user_location: str
    locations: Tuple[LocationSpec, ...]
    objects: Tuple[ObjectSpec, ...]
    robots: Tuple[RobotSpec, ...]
    goals: Tuple[GoalTemplate, ...]

    def location(self, name: str) -> LocationSpec:
        for loc in self.locations:
            if loc.name == name:
                return loc
        raise KeyError(name)

    def validate(self) -> "ScenarioTemplate":
        tid = self.template_id
        if self.environment not in ENVIRONMENTS:
            raise ScenarioError(f"template {tid}: unknown environment {self.environment!r}")
        locs = {loc.name: loc for loc in self.locations}
        if len(locs) != len(self.locations):
            raise ScenarioError(f"template {tid}: duplicate location names")
        if self.user_location not in locs:
            raise ScenarioError(f"template {tid}: user location {self.user_location} undefined")
        objs = {o.name for o in self.objects}
        if len(objs) != len(self.objects) or objs & set(locs):
            raise ScenarioError(f"template {tid}: object names must be unique and distinct from locations")
        for o in self.objects:
            for ln in o.locations + ((o.pour_into,) if o.pour_into else ()):
                if ln not in locs:
                    raise ScenarioError(f"template {tid}: object {o.name} refers to unknown location {ln}")
        # containment edges must not form a cycle
        for loc in self.locations:
            seen, cur = {loc.name}, loc.inside
            while cur is not None:
                if cur not in locs:
                    raise ScenarioError(f"template {tid}: {loc.name} inside unknown location {cur}")
                if cur in seen:
                    raise ScenarioError(f"template {tid}: affiliation cycle through {cur}")
                seen.add(cur)
                cur = locs[cur].inside
        for r in self.robots:
            if r.location not in locs:
                raise ScenarioError(f"template {tid}: robot {r.name} at unknown location {r.location}")
        union = set().union(*(r.tools for r in self.robots)) if self.robots else set()
        for g in self.goals:
            schema = GOAL_SCHEMAS.get(g.schema)
            if schema is None:
                raise ScenarioError(f"template {tid}: unknown goal schema {g.schema!r}")
            missing = sorted(set(schema.tools) - union)
            if missing:
                raise ScenarioError(f"template {tid}: goal {g.schema} needs tool(s) {missing} absent from roster")
            for s in schema.object_slots:
                bad = [v for v in g.slots.get(s, ()) if v not in objs]
                if not g.slots.get(s) or bad:
                    raise ScenarioError(f"template {tid}: goal {g.schema} slot {s} has unknown objects {bad}")
            for s in schema.location_slots:
                bad = [v for v in g.slots.get(s, ()) if v not in locs]
                if not g.slots.get(s) or bad:
                    raise ScenarioError(f"template {tid}: goal {g.schema} slot {s} has unknown locations {bad}")
            if g.schema == "cook_dish" and not any(o.pour_into for o in self.objects):
                raise ScenarioError(f"template {tid}: cook_dish needs a pourable object")
            if g.schema in ("cook_and_serve", "cook_dish") and not any(l.cooks for l in self.locations):
                raise ScenarioError(f"template {tid}: {g.schema} needs a cooking location")
            if g.schema == "gift_packing" and "gift_bag" not in locs:
                raise ScenarioError(f"template {tid}: gift_packing needs a gift_bag location")
        return self


def _template_from_dict(d: Mapping) -> ScenarioTemplate:
    try:
        return ScenarioTemplate(
            template_id=d["id"],
            environment=d["environment"],
            user_location=d["user_location"],
            locations=tuple(
                LocationSpec(l["name"], l["type"], tuple(float(v) for v in l["pos"]),
                             bool(l.get("openable", False)), bool(l.get("toggleable", False)),
                             bool(l.get("cooks", False)), l.get("inside"))
                for l in d["locations"]
            ),
            objects=tuple(ObjectSpec(o["name"], tuple(o["locations"]), o.get("pour_into")) for o in d["objects"]),
            robots=tuple(RobotSpec(r["name"], r["embodiment"], tuple(r["tools"]), r["location"])
                         for r in d["robots"]),
            goals=tuple(GoalTemplate(g["schema"], {k: tuple(v) for k, v in g["slots"].items()})
                        for g in d["goals"]),
        ).validate()
    except KeyError as exc:
        raise ScenarioError(f"template {d.get('id', '?')}: missing field {exc}") from None


def parse_templates(text: str, source: str = "<scenarios>") -> List[ScenarioTemplate]:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError(f"{source}: invalid YAML: {exc}") from None
    if not isinstance(data, dict) or data.get("version") != PACK_VERSION:
        raise ScenarioError(f"{source}: unsupported scenario pack version")
    out = [_template_from_dict(d) for d in data.get("templates", [])]
    ids = [t.template_id for t in out]
    if len(set(ids)) != len(ids):
        raise ScenarioError(f"{source}: duplicate template ids")
    return out


def load_templates(path: Union[str, Path, None] = None) -> List[ScenarioTemplate]:
    if path is None:
        text = resources.files("stforge.data").joinpath("scenarios_v1.yaml").read_text(encoding="utf-8")
        return parse_templates(text, "scenarios_v1.yaml")
    return parse_templates(Path(path).read_text(encoding="utf-8"), str(path))


def count_task_types(templates: Sequence[ScenarioTemplate]) -> int:
    """Distinct (template, goal schema, slot filling) combinations at full expansion."""
    return sum(len(g.combinations()) for t in templates for g in t.goals)


# --- instantiated scenes -------------------------------------------------------


@dataclass(frozen=True)
class TaskScene:
    """Concrete environment: locations with their properties and where each object sits."""

    scene_id: str
    environment: str
    user_location: str
    locations: Tuple[LocationSpec, ...]
    placements: Mapping[str, str]
    pour_into: Mapping[str, str] = field(default_factory=dict)

    def location(self, name: str) -> LocationSpec:
        for loc in self.locations:
            if loc.name == name:
                return loc
        raise KeyError(name)

    @property
    def location_names(self) -> Tuple[str, ...]:
        return tuple(l.name for l in self.locations)

    @property
    def objects(self) -> Tuple[str, ...]:
        return tuple(sorted(self.placements))

    def affiliation_edges(self) -> List[Tuple[str, str]]:
        """Object -> receptacle and receptacle -> enclosing location edges."""
        edges = [(o, l) for o, l in sorted(self.placements.items())]
        edges += [(l.name, l.inside) for l in self.locations if l.inside]
        return edges

    def to_scene_graph(self) -> SceneGraph:
        nodes = []
        for i, obj in enumerate(self.objects):
            col, row = i % 8, i // 8
            nodes.append(ObjectNode(obj, obj, Box2D(10 + 78 * col, 10 + 60 * row, 70 + 78 * col, 60 + 60 * row)))
        emb = tuple(
            EmbodimentEntry(l.name, l.type, tuple(sorted(o for o, p in self.placements.items() if p == l.name)))
            for l in self.locations
        )
        return SceneGraph(self.scene_id, 640, 480, tuple(nodes), embodiment=emb,
                          frames=(f"{self.scene_id}.jpg",))

    def to_dict(self) -> dict:
        return {
            "scene_id": self.scene_id,
            "environment": self.environment,
            "user_location": self.user_location,
            "locations": [
                {k: v for k, v in (("name", l.name), ("type", l.type), ("pos", list(l.pos)),
                                   ("openable", l.openable), ("toggleable", l.toggleable),
                                   ("cooks", l.cooks), ("inside", l.inside)) if v not in (None, False)}
                for l in self.locations
            ],
            "placements": dict(sorted(self.placements.items())),
            "pour_into": dict(sorted(self.pour_into.items())),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "TaskScene":
        return cls(
            d["scene_id"], d["environment"], d["user_location"],
            tuple(LocationSpec(l["name"], l["type"], tuple(l["pos"]), l.get("openable", False),
                               l.get("toggleable", False), l.get("cooks", False), l.get("inside"))
                  for l in d["locations"]),
            dict(d["placements"]), dict(d.get("pour_into", {})),
        )


@dataclass(frozen=True)
class Goal:
    schema: str
    slots: Mapping[str, str]
    text: str

    def to_dict(self) -> dict:
        return {"schema": self.schema, "slots": dict(sorted(self.slots.items())), "text": self.text}


@dataclass(frozen=True)
class ScenarioInstance:
    template_id: str
    seed: int
    scene: TaskScene
    robots: Tuple[RobotSpec, ...]
    goal: Goal

    @property
    def goal_text(self) -> str:
        return self.goal.text

    @property
    def scene_graph(self) -> SceneGraph:
        return self.scene.to_scene_graph()

    def __iter__(self):
        # unpacks as (scene, roster, goal text)
        return iter((self.scene, self.robots, self.goal.text))

    def to_dict(self) -> dict:
        return {"template_id": self.template_id, "seed": self.seed, "scene": self.scene.to_dict(),
                "robots": [r.to_dict() for r in self.robots], "goal": self.goal.to_dict()}

    @classmethod
    def from_dict(cls, d: Mapping) -> "ScenarioInstance":
        g = d["goal"]
        return cls(d["template_id"], d["seed"], TaskScene.from_dict(d["scene"]),
                   tuple(RobotSpec(r["name"], r["embodiment"], tuple(r["tools"]), r["location"]) for r in d["robots"]),
                   Goal(g["schema"], dict(g["slots"]), g["text"]))


def render_goal(schema: str, slots: Mapping[str, str]) -> str:
    s = GOAL_SCHEMAS[schema]
    values = {}
    for k, v in slots.items():
        values[k] = with_article(v) if k in s.object_slots else f"the {display(v)}"
    if schema == "cook_dish":
        values["ingredient"] = f"the {display(slots['ingredient'])}"
    return s.surface.format(**values)


_ARTICLE = r"(?:an? |the |some )?"


def parse_goal(text: str, scene: TaskScene) -> Goal:
    """Match ``text`` against the registered goal schemas, resolving slot names in ``scene``."""
    names = {display(n): n for n in scene.objects + scene.location_names}
    clean = text.strip().rstrip(".")
    for schema in GOAL_SCHEMAS.values():
        pattern = re.escape(schema.surface)
        for slot in schema.object_slots + schema.location_slots:
            pattern = pattern.replace(re.escape("{" + slot + "}"), f"{_ARTICLE}(?P<{slot}>.+?)")
        m = re.fullmatch(pattern, clean, flags=re.I)
        if m is None:
            continue
        slots = {}
        for k, v in m.groupdict().items():
            key = v.strip().lower()
            if key not in names:
                break
            slots[k] = names[key]
        else:
            return Goal(schema.name, slots, text)
    raise ScenarioError(f"goal {text!r} matches no registered goal schema")


def _destinations(schema: str, slots: Mapping[str, str], user_location: str) -> List[Tuple[str, str]]:
    if schema == "fetch_items":
        return [(slots["a"], user_location), (slots["b"], user_location)]
    if schema == "deliver_items":
        return [(slots["a"], slots["dest"]), (slots["b"], slots["dest"])]
    if schema == "cook_and_serve":
        return [(slots["dish"], slots["dest"])]
    if schema == "gift_packing":
        return [(slots["item"], "gift_bag")]
    if schema == "restock":
        return [(slots["item"], slots["shelf"])]
    if schema == "put_away":
        return [(slots["item"], slots["receptacle"])]
    return []


def _fallback(template: ScenarioTemplate, avoid: str) -> str:
    plain = [l.name for l in template.locations
             if l.name != avoid and not l.openable and not l.toggleable and not l.inside]
    return plain[0]


def cooking_location(scene: TaskScene, obj: Optional[str] = None) -> str:
    """Where ``obj`` gets cooked: the pour target of the scene's oil if any, else the first cooker."""
    for target in scene.pour_into.values():
        if scene.location(target).cooks:
            return target
    cookers = [l.name for l in scene.locations if l.cooks]
    if not cookers:
        raise ScenarioError(f"scene {scene.scene_id} has no cooking location")
    return cookers[0]


def goal_predicates(goal: Goal, scene: TaskScene) -> Tuple[tuple, ...]:
    """Terminal predicates that must hold for ``goal`` to count as achieved, in achievement order.

    Predicates: ("at", obj, loc), ("cooked", obj), ("on", loc), ("open", loc), ("closed", loc).
    """
    s = goal.slots
    if goal.schema == "cook_and_serve":
        return (("cooked", s["dish"]), ("at", s["dish"], s["dest"]))
    if goal.schema == "cook_dish":
        oil = next(o for o, t in sorted(scene.pour_into.items()))
        return (("at", oil, scene.pour_into[oil]), ("cooked", s["ingredient"]))
    if goal.schema == "put_away":
        return (("at", s["item"], s["receptacle"]), ("closed", s["receptacle"]))
    if goal.schema == "switch_on":
        return (("open", s["receptacle"]), ("on", s["appliance"]))
    return tuple(("at", o, d) for o, d in _destinations(goal.schema, s, scene.user_location))


def instantiate_scenario(template: ScenarioTemplate, seed: int,
                         goal_index: Optional[int] = None) -> ScenarioInstance:
    """Sample object placements and a filled goal; identical for identical (template, seed)."""
    template.validate()
    rng = random.Random(derive_seed("scenario", template.template_id, seed))
    goal_tpl = template.goals[goal_index] if goal_index is not None else rng.choice(template.goals)
    combo = rng.choice(goal_tpl.combinations())
    placements = {}
    for o in template.objects:
        placements[o.name] = rng.choice(o.locations)
    # an item never starts where the goal wants it
    for obj, dest in _destinations(goal_tpl.schema, combo, template.user_location):
        if placements[obj] == dest:
            spec = next(o for o in template.objects if o.name == obj)
            others = [l for l in spec.locations if l != dest]
            placements[obj] = rng.choice(others) if others else _fallback(template, dest)
    scene = TaskScene(
        scene_id=f"{template.template_id}_{seed:06d}",
        environment=template.environment,
        user_location=template.user_location,
        locations=template.locations,
        placements=placements,
        pour_into={o.name: o.pour_into for o in template.objects if o.pour_into},
    )
    goal = Goal(goal_tpl.schema, combo, render_goal(goal_tpl.schema, combo))
    return ScenarioInstance(template.template_id, seed, scene, template.robots, goal)
