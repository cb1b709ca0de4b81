"""Turn scenarios, workflows and episodes into QA items and auxiliary shard records."""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

from ..scene_core.io import derive_seed
from ..scene_core.types import QAItem
from .egoplan import EgoPlanItem, gen_egoplan_item
from .ota import replay, synthesize_ota
from .scenario import ScenarioInstance, ScenarioTemplate, instantiate_scenario, load_templates
from .simulator import Episode
from .validator import tool_plan_errors, workflow_errors
from .workflow import WorkflowGraph, decompose, emit_tool_plan, replay_tool_plans

TEMPORAL_FAMILIES = ("multirobot", "closeloop", "egoplan")


def scene_summary(scenario: ScenarioInstance) -> str:
    scene = scenario.scene
    lines = []
    for loc in scene.locations:
        props = [p for p, on in (("openable", loc.openable), ("toggleable", loc.toggleable)) if on]
        objs = sorted(o for o, l in scene.placements.items() if l == loc.name)
        line = f"- {loc.name} ({loc.type}{', ' + ', '.join(props) if props else ''})"
        if loc.inside:
            line += f" inside {loc.inside}"
        if objs:
            line += ": " + ", ".join(objs)
        lines.append(line)
    return "\n".join(lines)


def roster_summary(scenario: ScenarioInstance) -> str:
    return "\n".join(f"- {r.name} ({r.embodiment}) at {r.location}; tools: {', '.join(r.tools)}"
                     for r in scenario.robots)


def multirobot_item(scenario: ScenarioInstance, workflow: WorkflowGraph) -> QAItem:
    prompt = (f"Scene graph:\n{scene_summary(scenario)}\n\nRobots:\n{roster_summary(scenario)}\n\n"
              f"Task: {scenario.goal_text}\n"
              "Decompose the task into subtasks, assign each to a robot, and give the precedence edges.")
    answer = {"nodes": [{k: n[k] for k in ("id", "robot", "description", "rationale")}
                        for n in workflow.to_dict()["nodes"]],
              "edges": [list(e) for e in workflow.edges]}
    return QAItem(
        item_id=f"{scenario.scene.scene_id}:multirobot",
        family="multirobot",
        prompt=prompt,
        images=(f"{scenario.scene.scene_id}.jpg",),
        target_kind="workflow",
        answer=answer,
        provenance={"template": scenario.template_id, "seed": scenario.seed, "generator": workflow.generator},
        meta={"environment": scenario.scene.environment, "schema": scenario.goal.schema,
              "workflow": workflow.to_dict()},
    ).validate()


def closeloop_item(episode: Episode, index: int) -> QAItem:
    step = episode.steps[index]
    prev = episode.steps[index - 1]
    fb = prev.feedback
    feedback = "success" if fb.status == "success" else f"failure ({fb.reason})"
    prompt = (f'The task is "{episode.goal_text}." After you have finished {prev.action_text}, you can see '
              f"<image>, and the feedback of final action is {feedback}. What is your next action?")
    return QAItem(
        item_id=f"{episode.episode_id}:closeloop:{index}",
        family="closeloop",
        prompt=prompt,
        images=tuple(s.observation.frame for s in episode.steps[: index + 1]),
        target_kind="action",
        answer=step.action_text,
        provenance={"episode": episode.episode_id, "seed": episode.seed},
        meta={"observation": step.observation.text, "thought": step.thought, "step": index},
    ).validate()


def egoplan_qa(item: EgoPlanItem) -> QAItem:
    lines = [f"Task: {item.goal_text}.",
             "The earlier frames show the progress so far and the last frame is the current view. "
             "Choose the next action.", "Options:"]
    lines += [f"({l}) {o}" for l, o in zip("ABCD", item.options)]
    return QAItem(
        item_id=item.item_id,
        family="egoplan",
        prompt="\n".join(lines),
        images=item.history_frames + (item.current_frame,),
        target_kind="option",
        answer=item.answer,
        provenance={"generator": "rule:egoplan-v1"},
        meta={"options": list(item.options), "correct_index": "ABCD".index(item.answer),
              "answer_text": item.correct_option},
    ).validate()


@dataclass
class TemporalForgeResult:
    items: List[QAItem] = field(default_factory=list)
    workflows: List[dict] = field(default_factory=list)
    tool_plans: List[dict] = field(default_factory=list)
    episodes: List[Episode] = field(default_factory=list)
    stats: Dict[str, int] = field(default_factory=dict)


def forge_temporal(templates: Optional[Sequence[ScenarioTemplate]] = None, per_template: int = 3, seed: int = 0,
                   p: float = 0.2, families: Sequence[str] = TEMPORAL_FAMILIES, egoplan_per_episode: int = 2,
                   closeloop_per_episode: int = 2) -> TemporalForgeResult:
    """Deterministic batch: scenarios, their workflows and tool plans, OTA episodes and derived items."""
    unknown = [f for f in families if f not in TEMPORAL_FAMILIES]
    if unknown:
        raise ValueError(f"unknown temporal family {unknown[0]!r}")
    templates = list(templates) if templates is not None else load_templates()
    out = TemporalForgeResult()
    stats = {"scenarios": 0, "workflows_valid": 0, "toolplan_replay_success": 0,
             "episodes": 0, "ota_replay_success": 0}
    for tpl in templates:
        for k in range(per_template):
            sc_seed = derive_seed("forge-temporal", seed, tpl.template_id, k) % 1_000_000
            inst = instantiate_scenario(tpl, sc_seed)
            stats["scenarios"] += 1
            wf = decompose(inst.goal_text, inst.scene, inst.robots)
            plans = emit_tool_plan(wf, inst.scene, inst.robots)
            if workflow_errors(wf, inst.robots, inst.scene) or tool_plan_errors(plans, wf, inst.robots):
                raise AssertionError(f"decomposer emitted an invalid workflow for {inst.scene.scene_id}")
            stats["workflows_valid"] += 1
            if replay_tool_plans(plans, inst).outcome == "success":
                stats["toolplan_replay_success"] += 1
            out.workflows.append({"scene_id": inst.scene.scene_id, "scenario": inst.to_dict(),
                                  "workflow": wf.to_dict()})
            out.tool_plans.append({"scene_id": inst.scene.scene_id, "plans": [pl.to_dict() for pl in plans]})
            if "multirobot" in families:
                out.items.append(multirobot_item(inst, wf))

            ep = synthesize_ota(inst, seed=sc_seed, p=p)
            stats["episodes"] += 1
            if replay(ep).outcome == "success":
                stats["ota_replay_success"] += 1
            out.episodes.append(ep)
            rng = random.Random(derive_seed("temporal-items", ep.episode_id, seed))
            indices = list(range(1, len(ep.steps)))
            if "closeloop" in families:
                for i in sorted(rng.sample(indices, min(closeloop_per_episode, len(indices)))):
                    if ep.steps[i].action is not None:
                        out.items.append(closeloop_item(ep, i))
            if "egoplan" in families:
                made = 0
                for i in rng.sample(indices, len(indices)):
                    if made >= egoplan_per_episode:
                        break
                    item = gen_egoplan_item(ep, i, seed)
                    if item is not None:
                        out.items.append(egoplan_qa(item))
                        made += 1
    out.stats = stats
    return out
