"""Next-action multiple-choice items built from episode progress."""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import List, Optional, Set, Tuple

from ..scene_core.io import derive_seed
from .actions import Action, action_vocabulary, render_action
from .ota import PlanningError, remaining_cost
from .scenario import cooking_location
from .simulator import Episode, WorldState, apply_action, precondition_error

LETTERS = "ABCD"


@dataclass(frozen=True)
class EgoPlanItem:
    item_id: str
    history_frames: Tuple[str, ...]
    current_frame: str
    goal_text: str
    options: Tuple[str, ...]
    answer: str

    @property
    def correct_option(self) -> str:
        return self.options[LETTERS.index(self.answer)]

    def to_dict(self) -> dict:
        return {"item_id": self.item_id, "history_frames": list(self.history_frames),
                "current_frame": self.current_frame, "goal_text": self.goal_text,
                "options": list(self.options), "answer": self.answer}


def state_before(episode: Episode, index: int) -> WorldState:
    """World state right before step ``index``, rebuilt from the successful actions."""
    state = WorldState.initial(episode.scenario.scene, episode.scenario.robots)
    for step in episode.steps[:index]:
        if step.feedback.status == "success" and step.action is not None and step.action.verb != "done":
            apply_action(state, step.action)
    return state


def is_progress(state: WorldState, action: Action, goal, robot: str) -> bool:
    """Successor check: the action is executable and shortens the remaining plan by one step."""
    if precondition_error(state, action) is not None:
        return False
    try:
        before = remaining_cost(state, goal, robot)
        after_state = state.copy()
        apply_action(after_state, action)
        return remaining_cost(after_state, goal, robot) == before - 1
    except PlanningError:
        return False


def _relevant(episode: Episode, state: WorldState) -> Set[str]:
    """Objects and locations the goal touches; valid actions on them are never used as distractors."""
    scene = episode.scenario.scene
    names: Set[str] = set()
    for pred in episode.goal:
        names.update(pred[1:])
        if pred[0] in ("at", "cooked"):
            names.add(scene.placements[pred[1]])
            loc = state.obj_loc.get(pred[1])
            if loc:
                names.add(loc)
        if pred[0] == "cooked":
            names.add(cooking_location(scene, pred[1]))
    return names


def _interleaved(vocab: List[Action], rng: random.Random) -> List[Action]:
    """Shuffle within each verb, then alternate verbs so placements do not crowd out the rest."""
    by_verb = {}
    for a in vocab:
        by_verb.setdefault(a.verb, []).append(a)
    verbs = sorted(by_verb)
    rng.shuffle(verbs)
    for v in verbs:
        rng.shuffle(by_verb[v])
    out = []
    while any(by_verb.values()):
        for v in verbs:
            if by_verb[v]:
                out.append(by_verb[v].pop())
    return out


def gen_egoplan_item(episode: Episode, index: int, seed: int = 0,
                     n_distractors: int = 3) -> Optional[EgoPlanItem]:
    """Item asking for the action taken at ``index``; None when no distractor can be found.

    Distractors are vocabulary actions that are wrong in the current state:
    either not executable, or executable but unrelated to the goal.
    """
    if not 1 <= index < len(episode.steps):
        raise ValueError(f"step index {index} needs at least one prior step and must lie in the episode")
    if not 0 <= n_distractors <= 3:
        raise ValueError("n_distractors must be between 0 and 3")
    step = episode.steps[index]
    if step.action is None or step.action.verb == "done":
        return None
    scene = episode.scenario.scene
    robot = step.action.robot
    state = state_before(episode, index)
    if not is_progress(state, step.action, episode.goal, robot):
        return None
    correct = render_action(step.action, scene)
    relevant = _relevant(episode, state)
    rng = random.Random(derive_seed("egoplan", episode.episode_id, index, seed))
    pool = _interleaved(action_vocabulary(scene), rng)
    distractors: List[str] = []
    for cand in pool:
        if len(distractors) >= n_distractors:
            break
        if cand.verb == "done":
            continue
        cand = cand.with_robot(robot)
        text = render_action(cand, scene)
        if text == correct or text in distractors:
            continue
        if precondition_error(state, cand) is None:
            touched = {cand.target, cand.obj} - {None}
            if touched & relevant or is_progress(state, cand, episode.goal, robot):
                continue
        distractors.append(text)
    if not distractors:
        return None
    pos = rng.randrange(len(distractors) + 1)
    options = distractors[:pos] + [correct] + distractors[pos:]
    return EgoPlanItem(
        item_id=f"{episode.episode_id}:egoplan:{index}",
        history_frames=tuple(s.observation.frame for s in episode.steps[:index]),
        current_frame=step.observation.frame,
        goal_text=episode.goal_text,
        options=tuple(options),
        answer=LETTERS[pos],
    )
