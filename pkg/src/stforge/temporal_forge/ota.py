"""Observation-Thought-Action episode synthesis from the object-affiliation graph."""

from __future__ import annotations

from typing import List, Optional, Sequence, Tuple

from .actions import Action
from .scenario import RobotSpec, ScenarioInstance, cooking_location, display, goal_predicates
from .simulator import (
    Episode,
    PolicyContext,
    ScriptedPolicy,
    WorldState,
    apply_action,
    precondition_error,
    simulate_episode,
)

THOUGHT_GENERATOR = "template:thought-v1"


class PlanningError(ValueError):
    pass


def choose_agent(scenario: ScenarioInstance) -> RobotSpec:
    """The single executor for closed-loop episodes: the best-equipped robot, ties by name."""
    needs_bag = any(p[0] == "at" and p[2] == "gift_bag"
                    for p in goal_predicates(scenario.goal, scenario.scene))
    pool = [r for r in scenario.robots if not needs_bag or "open_gift_bag" in r.tools]
    if not pool:
        raise PlanningError("unreachable goal: no robot can open the gift bag")
    return min(pool, key=lambda r: (-len(r.tools), r.name))


class _Planner:
    def __init__(self, state: WorldState, robot: str):
        self.s = state
        self.robot = robot
        self.actions: List[Action] = []

    def do(self, action: Action) -> None:
        action = action.with_robot(self.robot)
        err = precondition_error(self.s, action)
        if err is not None:
            raise PlanningError(f"unreachable goal: {err}")
        apply_action(self.s, action)
        self.actions.append(action)

    def goto(self, loc: str) -> None:
        if self.s.robot_loc[self.robot] != loc:
            self.do(Action("navigate", loc))

    def ensure_open(self, loc: str) -> None:
        chain, cur = [], loc
        while cur is not None:
            chain.append(cur)
            cur = self.s.scene.location(cur).inside
        for l in reversed(chain):
            if self.s.scene.location(l).openable and l not in self.s.opened:
                self.goto(l)
                self.do(Action("open", l))
        self.goto(loc)

    def free_hand(self, needed: Sequence[str]) -> None:
        held = self.s.holding(self.robot)
        if len(held) < self.s.capacity[self.robot]:
            return
        spare = [o for o in held if o not in needed] or held
        here = self.s.robot_loc[self.robot]
        self.ensure_open(here)
        self.do(Action("place", here, spare[0]))

    def bring(self, obj: str, dest: str, needed: Sequence[str]) -> None:
        if self.s.obj_loc[obj] == dest:
            return
        holder = self.s.held_by[obj]
        if holder is not None and holder != self.robot:
            raise PlanningError(f"unreachable goal: {obj} is held by {holder}")
        if holder is None:
            src = self.s.obj_loc[obj]
            self.goto(src)
            if obj not in self.s.discovered:
                self.do(Action("search", src))
            self.ensure_open(src)
            self.free_hand(needed)
            self.do(Action("pick", obj=obj))
        self.ensure_open(dest)
        self.do(Action("place", dest, obj))

    def achieve(self, pred: tuple, needed: Sequence[str]) -> None:
        kind = pred[0]
        if self.s.holds(pred):
            return
        if kind == "at":
            self.bring(pred[1], pred[2], needed)
        elif kind == "cooked":
            cooker = cooking_location(self.s.scene, pred[1])
            self.bring(pred[1], cooker, needed)
            if not self.s.holds(pred):
                self.goto(cooker)
                if cooker in self.s.powered:
                    self.do(Action("toggle", cooker, state="off"))
                self.do(Action("toggle", cooker, state="on"))
        elif kind == "on":
            self.goto(pred[1])
            self.do(Action("toggle", pred[1], state="on"))
        elif kind == "open":
            self.ensure_open(pred[1])
        elif kind == "closed":
            self.goto(pred[1])
            self.do(Action("close", pred[1]))
        else:
            raise PlanningError(f"unknown goal predicate {pred!r}")


def plan_actions(state: WorldState, goal: Sequence[tuple], robot: str) -> Tuple[List[Action], List[int]]:
    """Key action sequence reaching ``goal`` from ``state``, plus the index where each subgoal starts.

    Containers are opened before their contents are picked, and an object
    still hidden is searched for before it is first touched.
    """
    planner = _Planner(state.copy(), robot)
    needed = [p[1] for p in goal if p[0] in ("at", "cooked")]
    starts = []
    for pred in goal:
        starts.append(len(planner.actions))
        planner.achieve(pred, needed)
    if not all(planner.s.holds(p) for p in goal):
        raise PlanningError("unreachable goal: plan does not establish every goal predicate")
    return planner.actions, starts


def remaining_cost(state: WorldState, goal: Sequence[tuple], robot: str) -> int:
    return len(plan_actions(state, goal, robot)[0])


def _situation(scenario: ScenarioInstance, state: WorldState, robot: str) -> str:
    hidden = [o for o in scenario.scene.objects if o not in state.discovered]
    goal = scenario.goal_text.rstrip(".")
    text = f"The task is: {goal}. I am at the {display(state.robot_loc[robot])}."
    relevant = [p[1] for p in goal_predicates(scenario.goal, scenario.scene) if p[0] in ("at", "cooked")]
    missing = [o for o in relevant if o in hidden]
    if missing:
        text += " I cannot see the " + " or the ".join(display(o) for o in missing) + " yet, so I need to search."
    return text


def _planning(pred: tuple) -> str:
    kind = pred[0]
    if kind == "at":
        return f"Next I should get the {display(pred[1])} to the {display(pred[2])}."
    if kind == "cooked":
        return f"Next the {display(pred[1])} has to be cooked."
    if kind == "on":
        return f"Next I need to switch on the {display(pred[1])}."
    if kind == "open":
        return f"Next the {display(pred[1])} must be opened."
    return f"Finally the {display(pred[1])} should be closed again."


class ThoughtPolicy:
    """Scripted policy that attaches situational, planning and reflection thoughts."""

    def __init__(self, scenario: ScenarioInstance, robot: str, actions: Sequence[Action], starts: Sequence[int],
                 goal: Sequence[tuple]):
        self.inner = ScriptedPolicy(actions)
        self.scenario = scenario
        self.robot = robot
        self.starts = {s: g for s, g in zip(starts, goal)}

    def __call__(self, ctx: PolicyContext):
        action = self.inner(ctx)
        done = sum(1 for s in ctx.steps if s.feedback.status == "success")
        thought = None
        if ctx.steps and ctx.steps[-1].feedback.status == "failure":
            last = ctx.steps[-1]
            thought = (f"The attempt to {last.action_text.lower()} failed ({last.feedback.reason}). "
                       "Nothing changed, so I will try it again.")
        elif not ctx.steps:
            state = WorldState.initial(self.scenario.scene, self.scenario.robots)
            thought = _situation(self.scenario, state, self.robot)
            if 0 in self.starts:
                thought += " " + _planning(self.starts[0])
        elif done in self.starts:
            thought = _planning(self.starts[done])
        return action, thought


def synthesize_ota(scenario: ScenarioInstance, seed: int = 0, p: float = 0.0,
                   max_steps: Optional[int] = None, episode_id: Optional[str] = None) -> Episode:
    """Closed-loop episode with thoughts, driven by the affiliation-graph plan."""
    robot = choose_agent(scenario)
    state = WorldState.initial(scenario.scene, scenario.robots)
    goal = goal_predicates(scenario.goal, scenario.scene)
    actions, starts = plan_actions(state, goal, robot.name)
    # drop subgoals that were already satisfied (empty segments)
    policy = ThoughtPolicy(scenario, robot.name, actions, starts, goal)
    limit = max_steps if max_steps is not None else 4 * len(actions) + 10
    return simulate_episode(scenario, policy, p=p, max_steps=limit, seed=seed, episode_id=episode_id,
                            thought_generator=THOUGHT_GENERATOR)


def replay(episode: Episode, p: float = 0.0, seed: int = 0) -> Episode:
    """Re-run the successful actions of ``episode`` through a fresh simulator."""
    actions = episode.action_sequence()
    return simulate_episode(episode.scenario, ScriptedPolicy(actions), p=p, max_steps=len(actions) + 1,
                            seed=seed, episode_id=episode.episode_id + ":replay")
