"""Rule-based multi-robot decomposition into workflow graphs and tool plans."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Sequence, Tuple

from .actions import Action
from .ota import PlanningError, _Planner
from .scenario import (
    RobotSpec,
    ScenarioInstance,
    TaskScene,
    cooking_location,
    display,
    parse_goal,
)
from .simulator import Episode, ScriptedPolicy, WorldState, enclosed, required_tool, simulate_episode

DECOMPOSER_ID = "rule:decompose-v1"


class WorkflowError(ValueError):
    pass


@dataclass(frozen=True)
class Subtask:
    id: str
    robot: str
    description: str
    tools: Tuple[str, ...]
    predecessors: Tuple[str, ...]
    rationale: str
    kind: str = ""
    args: Mapping[str, str] = field(default_factory=dict)
    effects: Tuple[tuple, ...] = ()

    def to_dict(self) -> dict:
        return {"id": self.id, "robot": self.robot, "description": self.description,
                "rationale": self.rationale, "tools": list(self.tools),
                "predecessors": list(self.predecessors), "kind": self.kind,
                "args": dict(sorted(self.args.items())), "effects": [list(e) for e in self.effects]}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Subtask":
        return cls(d["id"], d["robot"], d["description"], tuple(d.get("tools", ())),
                   tuple(d.get("predecessors", ())), d.get("rationale", ""), d.get("kind", ""),
                   dict(d.get("args", {})), tuple(tuple(e) for e in d.get("effects", ())))


@dataclass(frozen=True)
class WorkflowGraph:
    goal: str
    subtasks: Tuple[Subtask, ...]
    edges: Tuple[Tuple[str, str], ...]
    generator: str = DECOMPOSER_ID

    def subtask(self, sid: str) -> Subtask:
        for s in self.subtasks:
            if s.id == sid:
                return s
        raise KeyError(sid)

    def topological_order(self) -> List[Subtask]:
        done: List[str] = []
        pending = [s.id for s in self.subtasks]
        while pending:
            ready = [sid for sid in pending
                     if all(a in done for a, b in self.edges if b == sid)]
            if not ready:
                raise WorkflowError("invalid: cycle")
            done.append(ready[0])
            pending.remove(ready[0])
        return [self.subtask(s) for s in done]

    def to_dict(self) -> dict:
        return {"goal": self.goal, "generator": self.generator,
                "nodes": [s.to_dict() for s in self.subtasks],
                "edges": [list(e) for e in self.edges]}

    @classmethod
    def from_dict(cls, d: Mapping) -> "WorkflowGraph":
        return cls(d["goal"], tuple(Subtask.from_dict(n) for n in d["nodes"]),
                   tuple((a, b) for a, b in d["edges"]), d.get("generator", DECOMPOSER_ID))


@dataclass(frozen=True)
class ToolCall:
    tool: str
    args: Mapping[str, str]

    def to_dict(self) -> dict:
        return {"tool": self.tool, "args": dict(sorted(self.args.items()))}


@dataclass(frozen=True)
class ToolPlan:
    """Ordered (expected observation, tool call) pairs for one subtask."""

    subtask_id: str
    robot: str
    steps: Tuple[Tuple[str, ToolCall], ...]

    def to_dict(self) -> dict:
        return {"subtask_id": self.subtask_id, "robot": self.robot,
                "steps": [{"observation": o, "call": c.to_dict()} for o, c in self.steps]}


# --- decomposition --------------------------------------------------------------


@dataclass
class _Spec:
    key: str
    kind: str
    args: Dict[str, str]
    deps: List[str]
    effects: List[tuple]


def _fetch(key, obj, dst, deps=(), effects=None) -> _Spec:
    return _Spec(key, "fetch", {"object": obj, "target": dst}, list(deps),
                 effects if effects is not None else [("at", obj, dst)])


def _expand(goal, scene: TaskScene) -> List[_Spec]:
    s = goal.slots
    user = scene.user_location
    if goal.schema in ("fetch_items", "deliver_items"):
        dest = s.get("dest", user)
        return [_fetch("fetch_a", s["a"], dest), _fetch("fetch_b", s["b"], dest),
                _Spec("deliver", "deliver", {"target": dest}, ["fetch_a", "fetch_b"], [])]
    if goal.schema == "cook_and_serve":
        cooker = cooking_location(scene, s["dish"])
        return [_fetch("fetch", s["dish"], cooker, effects=[]),
                _Spec("cook", "toggle", {"target": cooker, "state": "on"}, ["fetch"], [("cooked", s["dish"])]),
                _fetch("serve", s["dish"], s["dest"], ["cook"])]
    if goal.schema == "gift_packing":
        return [_Spec("open_bag", "open", {"target": "gift_bag"}, [], []),
                _fetch("pack", s["item"], "gift_bag", ["open_bag"])]
    if goal.schema == "restock":
        return [_fetch("restock", s["item"], s["shelf"])]
    if goal.schema == "put_away":
        rec = s["receptacle"]
        return [_Spec("open", "open", {"target": rec}, [], []),
                _fetch("store", s["item"], rec, ["open"]),
                _Spec("close", "close", {"target": rec}, ["store"], [("closed", rec)])]
    if goal.schema == "switch_on":
        rec, app = s["receptacle"], s["appliance"]
        return [_Spec("open", "open", {"target": rec}, [], [("open", rec)]),
                _Spec("switch", "toggle", {"target": app, "state": "on"}, ["open"], [("on", app)])]
    if goal.schema == "cook_dish":
        oil = sorted(scene.pour_into)[0]
        cooker = scene.pour_into[oil]
        ing = s["ingredient"]
        return [_fetch("pour", oil, cooker), _fetch("prepare", ing, cooker, effects=[]),
                _Spec("cook", "toggle", {"target": cooker, "state": "on"}, ["pour", "prepare"],
                      [("cooked", ing)])]
    raise WorkflowError(f"no decomposition rule for goal schema {goal.schema!r}")


def _required_tools(spec: _Spec, scene: TaskScene, opened_by_deps: set) -> Tuple[str, ...]:
    if spec.kind == "deliver":
        return ("done",)
    if spec.kind in ("open", "close"):
        return ("navigate", required_tool(Action(spec.kind, spec.args["target"])))
    if spec.kind == "toggle":
        return ("navigate", "toggle")
    tools = ["navigate", "pick", "place"]
    src = spec.args["source"]
    dst = spec.args["target"]
    if enclosed(scene, src):
        tools += ["search", "open"]
    if enclosed(scene, dst) and dst not in opened_by_deps:
        tools.append(required_tool(Action("open", dst)))
    return tuple(dict.fromkeys(tools))


def _start(spec: _Spec, scene: TaskScene) -> str:
    if spec.kind == "fetch":
        return spec.args["source"]
    return spec.args["target"]


def _describe(spec: _Spec, scene: TaskScene) -> str:
    a = spec.args
    if spec.kind == "fetch":
        src = a["source"]
        if scene.pour_into.get(a["object"]) == a["target"]:
            return f"Take the {display(a['object'])} from the {display(src)} and pour it into the {display(a['target'])}"
        return (f"Fetch the {display(a['object'])} from the {display(src)} "
                f"and place it at the {display(a['target'])}")
    if spec.kind == "deliver":
        return f"Report that the items are ready at the {display(a['target'])}"
    if spec.kind == "toggle":
        return f"Switch {a['state']} the {display(a['target'])}"
    return f"{spec.kind.capitalize()} the {display(a['target'])}"


def _dist(a: Tuple[float, float], b: Tuple[float, float]) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def _reaches(edges: Sequence[Tuple[str, str]], src: str, dst: str) -> bool:
    stack, seen = [src], set()
    while stack:
        n = stack.pop()
        if n == dst:
            return True
        if n in seen:
            continue
        seen.add(n)
        stack += [b for a, b in edges if a == n]
    return False


def decompose(goal_text: str, scene: TaskScene, roster: Sequence[RobotSpec]) -> WorkflowGraph:
    """Expand the goal's schema into robot-assigned subtasks.

    Assignment prefers capable robots with the fewest subtasks so far, then the
    one closest to where the subtask starts, then the lexicographically first
    name. Subtasks sharing a robot are chained since one robot acts serially.
    """
    goal = parse_goal(goal_text, scene)
    specs = _expand(goal, scene)
    if not roster:
        raise WorkflowError("empty robot roster")
    load = {r.name: 0 for r in roster}
    ids = {sp.key: f"t{i + 1}" for i, sp in enumerate(specs)}
    subtasks: List[Subtask] = []
    edges: List[Tuple[str, str]] = []
    opened: Dict[str, set] = {}
    where = dict(scene.placements)
    for sp in specs:
        if sp.kind == "fetch":
            sp.args["source"] = where[sp.args["object"]]
            where[sp.args["object"]] = sp.args["target"]
        before = set().union(*(opened[d] for d in sp.deps)) if sp.deps else set()
        tools = _required_tools(sp, scene, before)
        capable = [r for r in roster if set(tools) <= set(r.tools)]
        if not capable:
            owned = set().union(*(r.tools for r in roster))
            missing = sorted(set(tools) - owned) or sorted(set(tools) - set(roster[0].tools))
            raise WorkflowError(f"no capable robot: {', '.join(missing)}")
        start = scene.location(_start(sp, scene)).pos
        robot = min(capable, key=lambda r: (load[r.name], _dist(scene.location(r.location).pos, start), r.name))
        load[robot.name] += 1
        opened[sp.key] = before | ({sp.args["target"]} if sp.kind == "open" else set())
        sid = ids[sp.key]
        for d in sp.deps:
            edges.append((ids[d], sid))
        for prev in subtasks:
            if prev.robot == robot.name and not _reaches(edges, prev.id, sid):
                edges.append((prev.id, sid))
        rationale = (f"{robot.name} has the {', '.join(tools)} tools needed here and is "
                     f"{_dist(scene.location(robot.location).pos, start):.1f} m from the "
                     f"{display(_start(sp, scene))}")
        if sp.deps:
            rationale += "; it waits for " + " and ".join(ids[d] for d in sp.deps)
        subtasks.append(Subtask(sid, robot.name, _describe(sp, scene), tools,
                                tuple(a for a, b in edges if b == sid), rationale + ".", sp.kind,
                                dict(sp.args), tuple(sp.effects)))
    # predecessors may have grown through later chaining edges
    final = tuple(Subtask(s.id, s.robot, s.description, s.tools, tuple(a for a, b in edges if b == s.id),
                          s.rationale, s.kind, s.args, s.effects) for s in subtasks)
    return WorkflowGraph(goal_text, final, tuple(edges))


# --- tool plans -----------------------------------------------------------------

_PARAMS = {"navigate": ("target",), "search": ("target",), "open": ("target",), "close": ("target",),
           "pick": ("object",), "place": ("object", "target"), "toggle": ("target", "state"), "done": ()}


def _call(action: Action) -> ToolCall:
    values = {"target": action.target, "object": action.obj, "state": action.state}
    return ToolCall(required_tool(action), {k: values[k] for k in _PARAMS[action.verb]})


def _effect(action: Action) -> str:
    v = action.verb
    if v == "navigate":
        return f"at({action.robot}, {action.target})"
    if v == "search":
        return f"searched({action.target})"
    if v in ("open", "close"):
        return f"{'open' if v == 'open' else 'closed'}({action.target})"
    if v == "pick":
        return f"holding({action.robot}, {action.obj})"
    if v == "place":
        return f"at({action.obj}, {action.target})"
    if v == "toggle":
        return f"{action.state}({action.target})"
    return "done"


def emit_tool_plan(workflow: WorkflowGraph, scene: TaskScene,
                   roster: Sequence[RobotSpec]) -> List[ToolPlan]:
    """Expand each subtask (in topological order) into Observation-Action pairs.

    The observation paired with a call is the state it expects to see: the
    effect of the robot's previous call, or its starting position.
    """
    for s in workflow.subtasks:
        obj = s.args.get("object")
        if obj is not None and obj not in scene.placements:
            raise WorkflowError(f"dangling object reference {obj!r} in subtask {s.id}")
        tgt = s.args.get("target")
        if tgt is not None and tgt not in scene.location_names:
            raise WorkflowError(f"dangling location reference {tgt!r} in subtask {s.id}")
    state = WorldState.initial(scene, roster)
    last_obs = {r.name: f"at({r.name}, {r.location})" for r in roster}
    plans = []
    for s in workflow.topological_order():
        planner = _Planner(state, s.robot)
        try:
            if s.kind == "fetch":
                planner.bring(s.args["object"], s.args["target"], [s.args["object"]])
            elif s.kind == "open":
                planner.ensure_open(s.args["target"])
            elif s.kind == "close":
                planner.achieve(("closed", s.args["target"]), [])
            elif s.kind == "toggle":
                planner.goto(s.args["target"])
                if (s.args["state"] == "on") != (s.args["target"] in state.powered):
                    planner.do(Action("toggle", s.args["target"], state=s.args["state"]))
            elif s.kind == "deliver":
                planner.actions.append(Action("done", robot=s.robot))
            else:
                raise WorkflowError(f"subtask {s.id} has unknown kind {s.kind!r}")
        except PlanningError as exc:
            raise WorkflowError(f"subtask {s.id}: {exc}") from None
        steps = []
        for a in planner.actions:
            steps.append((last_obs[s.robot], _call(a)))
            last_obs[s.robot] = _effect(a)
        plans.append(ToolPlan(s.id, s.robot, tuple(steps)))
    return plans


def tool_plan_actions(plans: Sequence[ToolPlan]) -> List[Action]:
    out = []
    for plan in plans:
        for _, call in plan.steps:
            verb = "open" if call.tool == "open_gift_bag" else call.tool
            a = call.args
            out.append(Action(verb, a.get("target"), a.get("object"), a.get("state"), plan.robot))
    return out


def replay_tool_plans(plans: Sequence[ToolPlan], scenario: ScenarioInstance, p: float = 0.0,
                      seed: int = 0) -> Episode:
    """Execute the plans through the simulator (serialized in plan order)."""
    actions = [a for a in tool_plan_actions(plans) if a.verb != "done"]
    return simulate_episode(scenario, ScriptedPolicy(actions), p=p, max_steps=max(1, 4 * len(actions) + 10),
                            seed=seed, episode_id=f"{scenario.scene.scene_id}:toolplan{seed}")
