"""Symbolic environment state machine with seeded failure injection."""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Set, Tuple, Union

from ..scene_core.io import derive_seed
from .actions import FAILURE_TABLE, Action, ActionError, parse_action, render_action
from .scenario import RobotSpec, ScenarioInstance, TaskScene, display, goal_predicates

OUTCOMES = ("success", "failure", "step-limit")
VERB_TOOL = {"navigate": "navigate", "open": "open", "close": "close", "pick": "pick", "place": "place",
             "toggle": "toggle", "search": "search", "done": "done"}


def required_tool(action: Action) -> str:
    if action.verb == "open" and action.target == "gift_bag":
        return "open_gift_bag"
    return VERB_TOOL[action.verb]


@dataclass
class WorldState:
    """Mutable simulator state. An object is either at one location or held by one robot."""

    scene: TaskScene
    capacity: Dict[str, int]
    tools: Dict[str, Tuple[str, ...]]
    obj_loc: Dict[str, Optional[str]]
    held_by: Dict[str, Optional[str]]
    robot_loc: Dict[str, str]
    opened: Set[str]
    powered: Set[str]
    cooked: Set[str]
    discovered: Set[str]

    @classmethod
    def initial(cls, scene: TaskScene, robots: Sequence[RobotSpec]) -> "WorldState":
        hidden = {o for o, l in scene.placements.items() if enclosed(scene, l)}
        return cls(
            scene=scene,
            capacity={r.name: r.capacity for r in robots},
            tools={r.name: tuple(r.tools) for r in robots},
            obj_loc=dict(scene.placements),
            held_by={o: None for o in scene.placements},
            robot_loc={r.name: r.location for r in robots},
            opened=set(),
            powered=set(),
            cooked=set(),
            discovered=set(scene.placements) - hidden,
        )

    def copy(self) -> "WorldState":
        return WorldState(self.scene, dict(self.capacity), dict(self.tools), dict(self.obj_loc),
                          dict(self.held_by), dict(self.robot_loc), set(self.opened), set(self.powered),
                          set(self.cooked), set(self.discovered))

    def holding(self, robot: str) -> List[str]:
        return sorted(o for o, r in self.held_by.items() if r == robot)

    def is_closed(self, loc: str) -> bool:
        """Closed if the location or any location enclosing it is an unopened container."""
        cur: Optional[str] = loc
        while cur is not None:
            spec = self.scene.location(cur)
            if spec.openable and cur not in self.opened:
                return True
            cur = spec.inside
        return False

    def holds(self, pred: tuple) -> bool:
        kind = pred[0]
        if kind == "at":
            return self.obj_loc.get(pred[1]) == pred[2]
        if kind == "cooked":
            return pred[1] in self.cooked
        if kind == "on":
            return pred[1] in self.powered
        if kind == "open":
            return pred[1] in self.opened
        if kind == "closed":
            return pred[1] not in self.opened
        raise ValueError(f"unknown predicate {pred!r}")

    def check_invariants(self) -> None:
        for o in self.obj_loc:
            at, held = self.obj_loc[o], self.held_by[o]
            if (at is None) == (held is None):
                raise AssertionError(f"object {o} must be in exactly one place")
        for r, cap in self.capacity.items():
            if len(self.holding(r)) > cap:
                raise AssertionError(f"robot {r} over capacity")

    def to_dict(self) -> dict:
        return {
            "obj_loc": dict(sorted(self.obj_loc.items())),
            "held_by": {o: r for o, r in sorted(self.held_by.items()) if r},
            "robot_loc": dict(sorted(self.robot_loc.items())),
            "opened": sorted(self.opened),
            "powered": sorted(self.powered),
            "cooked": sorted(self.cooked),
            "discovered": sorted(self.discovered),
        }


def enclosed(scene: TaskScene, loc: str) -> bool:
    """True when ``loc`` sits in (or is) an openable container, so its contents start hidden."""
    cur: Optional[str] = loc
    while cur is not None:
        spec = scene.location(cur)
        if spec.openable:
            return True
        cur = spec.inside
    return False


def _contained(scene: TaskScene, loc: str, outer: str) -> bool:
    cur: Optional[str] = loc
    while cur is not None:
        if cur == outer:
            return True
        cur = scene.location(cur).inside
    return False


def precondition_error(state: WorldState, action: Action) -> Optional[str]:
    """Reason ``action`` cannot run in ``state``, or None if it is valid."""
    scene = state.scene
    robot = action.robot
    if robot not in state.robot_loc:
        return f"unknown robot {robot!r}"
    tool = required_tool(action)
    if tool not in state.tools[robot]:
        return f"{robot} lacks tool {tool}"
    here = state.robot_loc[robot]
    v = action.verb
    if v == "done":
        return None
    if action.target is not None and action.target not in scene.location_names:
        return f"unknown location {action.target!r}"
    if action.obj is not None and action.obj not in state.obj_loc:
        return f"unknown object {action.obj!r}"
    if v == "navigate":
        return None
    if v == "pick":
        o = action.obj
        if state.held_by[o] is not None:
            return f"{display(o)} is already held"
        if o not in state.discovered:
            return f"{display(o)} has not been found"
        if state.obj_loc[o] != here:
            return f"{display(o)} is not at {display(here)}"
        if state.is_closed(here):
            return f"{display(here)} is closed"
        if len(state.holding(robot)) >= state.capacity[robot]:
            return f"{robot} has no free hand"
        return None
    if action.target != here:
        return f"{robot} is not at {display(action.target)}"
    spec = scene.location(action.target)
    if v == "search":
        return None
    if v in ("open", "close"):
        if not spec.openable:
            return f"{display(action.target)} cannot be opened"
        if v == "open" and action.target in state.opened:
            return f"{display(action.target)} is already open"
        if v == "close" and action.target not in state.opened:
            return f"{display(action.target)} is already closed"
        return None
    if v == "toggle":
        if not spec.toggleable:
            return f"{display(action.target)} has no switch"
        if (action.state == "on") == (action.target in state.powered):
            return f"{display(action.target)} is already {action.state}"
        return None
    if v == "place":
        if state.held_by.get(action.obj) != robot:
            return f"{robot} is not holding {display(action.obj)}"
        if state.is_closed(here):
            return f"{display(here)} is closed"
        return None
    return f"unsupported verb {v}"


def apply_action(state: WorldState, action: Action) -> None:
    """Apply a valid action in place."""
    scene = state.scene
    v, t = action.verb, action.target
    if v == "navigate":
        state.robot_loc[action.robot] = t
    elif v == "open":
        state.opened.add(t)
        state.discovered |= {o for o, l in state.obj_loc.items() if l == t}
    elif v == "close":
        state.opened.discard(t)
    elif v == "search":
        state.discovered |= {o for o, l in state.obj_loc.items() if l is not None and _contained(scene, l, t)}
    elif v == "toggle":
        if action.state == "on":
            state.powered.add(t)
            if scene.location(t).cooks:
                state.cooked |= {o for o, l in state.obj_loc.items() if l == t}
        else:
            state.powered.discard(t)
    elif v == "pick":
        state.obj_loc[action.obj] = None
        state.held_by[action.obj] = action.robot
    elif v == "place":
        state.held_by[action.obj] = None
        state.obj_loc[action.obj] = t
        state.discovered.add(action.obj)
        if t in state.powered and scene.location(t).cooks:
            state.cooked.add(action.obj)


def observe(state: WorldState, robot: str) -> str:
    """Textual summary limited to what has been discovered."""
    held = state.holding(robot)
    seen = sorted((o, l) for o, l in state.obj_loc.items() if l is not None and o in state.discovered)
    parts = [
        f"{robot} is at {display(state.robot_loc[robot])}",
        "holding " + (", ".join(display(o) for o in held) if held else "nothing"),
        "visible: " + ("; ".join(f"{display(o)} at {display(l)}" for o, l in seen) or "none"),
        "open: " + (", ".join(display(l) for l in sorted(state.opened)) or "none"),
        "on: " + (", ".join(display(l) for l in sorted(state.powered)) or "none"),
    ]
    return ". ".join(parts) + "."


@dataclass(frozen=True)
class Feedback:
    status: str
    reason: str = ""
    injected: bool = False

    @property
    def eligible(self) -> bool:
        """Whether the action passed its preconditions (so failure injection applied)."""
        return self.status == "success" or self.injected

    def to_dict(self) -> dict:
        return {"status": self.status, "reason": self.reason, "injected": self.injected}


@dataclass(frozen=True)
class Observation:
    text: str
    frame: str

    def to_dict(self) -> dict:
        return {"text": self.text, "frame": self.frame}


@dataclass(frozen=True)
class OTAStep:
    index: int
    observation: Observation
    action: Optional[Action]
    action_text: str
    feedback: Feedback
    thought: Optional[str] = None
    thought_generator: Optional[str] = None

    def to_dict(self) -> dict:
        d = {"index": self.index, "observation": self.observation.to_dict(),
             "action": self.action.to_dict() if self.action else None, "action_text": self.action_text,
             "feedback": self.feedback.to_dict()}
        if self.thought is not None:
            d["thought"] = self.thought
            d["thought_generator"] = self.thought_generator
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "OTAStep":
        return cls(d["index"], Observation(**d["observation"]),
                   Action.from_dict(d["action"]) if d.get("action") else None, d["action_text"],
                   Feedback(**d["feedback"]), d.get("thought"), d.get("thought_generator"))


@dataclass(frozen=True)
class Episode:
    episode_id: str
    scenario: ScenarioInstance
    seed: int
    failure_rate: float
    goal: Tuple[tuple, ...]
    steps: Tuple[OTAStep, ...]
    outcome: str
    final_state: Mapping[str, Any] = field(default_factory=dict)

    @property
    def goal_text(self) -> str:
        return self.scenario.goal_text

    def action_sequence(self) -> List[Action]:
        """Actions that succeeded, in order."""
        return [s.action for s in self.steps if s.feedback.status == "success" and s.action is not None]

    def failure_counts(self) -> Tuple[int, int]:
        """(injected failures, eligible actions)."""
        eligible = [s for s in self.steps if s.action is not None and s.action.verb != "done" and s.feedback.eligible]
        return sum(1 for s in eligible if s.feedback.injected), len(eligible)

    def to_dict(self) -> dict:
        return {
            "episode_id": self.episode_id,
            "scenario": self.scenario.to_dict(),
            "seed": self.seed,
            "failure_rate": self.failure_rate,
            "goal": [list(p) for p in self.goal],
            "steps": [s.to_dict() for s in self.steps],
            "outcome": self.outcome,
            "final_state": dict(self.final_state),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Episode":
        return cls(d["episode_id"], ScenarioInstance.from_dict(d["scenario"]), d["seed"], d["failure_rate"],
                   tuple(tuple(p) for p in d["goal"]), tuple(OTAStep.from_dict(s) for s in d["steps"]),
                   d["outcome"], dict(d.get("final_state", {})))


@dataclass(frozen=True)
class PolicyContext:
    """What a policy sees before choosing the next action."""

    scenario: ScenarioInstance
    observation: str
    steps: Tuple[OTAStep, ...]
    robot: str


PolicyOutput = Union[Action, str, Tuple[Union[Action, str], Optional[str]]]
Policy = Callable[[PolicyContext], PolicyOutput]


class ScriptedPolicy:
    """Replays a fixed action list, retrying each action until it succeeds, then says done."""

    def __init__(self, actions: Sequence[Action], generator: str = "scripted"):
        self.actions = list(actions)
        self.generator = generator

    def __call__(self, ctx: PolicyContext) -> Action:
        done = sum(1 for s in ctx.steps if s.feedback.status == "success")
        if done < len(self.actions):
            return self.actions[done]
        return Action("done", robot=ctx.robot)


def simulate_episode(scenario: ScenarioInstance, policy: Policy, p: float = 0.0, max_steps: int = 50,
                     seed: int = 0, episode_id: Optional[str] = None, stop_on_goal: bool = True,
                     thought_generator: Optional[str] = None) -> Episode:
    """Run ``policy`` in the scenario until the goal holds, the policy says done, or ``max_steps``."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"failure rate must be in [0, 1], got {p}")
    if max_steps < 1:
        raise ValueError("max_steps must be >= 1")
    scene, robots = scenario.scene, scenario.robots
    state = WorldState.initial(scene, robots)
    goal = goal_predicates(scenario.goal, scene)
    ep_id = episode_id or f"{scene.scene_id}:ep{seed}"
    rng = random.Random(derive_seed("episode", ep_id, seed, repr(p)))
    default_robot = robots[0].name
    steps: List[OTAStep] = []
    outcome = "step-limit"

    def achieved() -> bool:
        return all(state.holds(g) for g in goal)

    for i in range(max_steps):
        obs_robot = steps[-1].action.robot if steps and steps[-1].action and steps[-1].action.robot else default_robot
        obs = Observation(observe(state, obs_robot), f"{ep_id}/frame_{i:03d}.jpg")
        out = policy(PolicyContext(scenario, obs.text, tuple(steps), obs_robot))
        thought = None
        if isinstance(out, tuple):
            out, thought = out
        action: Optional[Action]
        if isinstance(out, str):
            try:
                action = parse_action(out, scene, default_robot)
            except ActionError as exc:
                steps.append(OTAStep(i, obs, None, out, Feedback("failure", f"unparseable action: {exc}"),
                                     thought, thought_generator if thought else None))
                continue
        else:
            action = out if out.robot is not None else out.with_robot(default_robot)
        text = render_action(action, scene)
        err = precondition_error(state, action)
        if err is not None:
            fb = Feedback("failure", err)
        elif action.verb == "done":
            fb = Feedback("success")
        elif rng.random() < p:
            fb = Feedback("failure", rng.choice(FAILURE_TABLE[action.verb]), injected=True)
        else:
            apply_action(state, action)
            fb = Feedback("success")
        steps.append(OTAStep(i, obs, action, text, fb, thought, thought_generator if thought else None))
        if action.verb == "done" and fb.status == "success":
            outcome = "success" if achieved() else "failure"
            break
        if stop_on_goal and achieved():
            outcome = "success"
            break
    else:
        outcome = "success" if achieved() else "step-limit"
    return Episode(ep_id, scenario, seed, p, goal, tuple(steps), outcome, state.to_dict())
