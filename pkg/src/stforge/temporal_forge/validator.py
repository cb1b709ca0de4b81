"""Independent brute-force checks for workflow graphs and tool plans.

Deliberately shares no code with the decomposer: it reads the serialized
form and re-derives everything it needs.
"""

from __future__ import annotations

from typing import Any, List, Mapping, Optional, Sequence

from .scenario import RobotSpec, TaskScene, goal_predicates, parse_goal


def _as_dict(graph: Any) -> Mapping:
    return graph.to_dict() if hasattr(graph, "to_dict") else graph


def has_cycle(node_ids: Sequence[str], edges: Sequence[Sequence[str]]) -> bool:
    """Exhaustive DFS from every node looking for a path back to itself."""
    succ = {n: [b for a, b in edges if a == n] for n in node_ids}
    for start in node_ids:
        stack, seen = list(succ[start]), set()
        while stack:
            n = stack.pop()
            if n == start:
                return True
            if n in seen:
                continue
            seen.add(n)
            stack.extend(succ.get(n, ()))
    return False


def workflow_errors(graph: Any, roster: Optional[Sequence[RobotSpec]] = None,
                    scene: Optional[TaskScene] = None) -> List[str]:
    """All violations found in ``graph``; an empty list means valid."""
    d = _as_dict(graph)
    errors: List[str] = []
    nodes = d.get("nodes", [])
    ids = [n.get("id") for n in nodes]
    if len(set(ids)) != len(ids):
        errors.append("invalid: duplicate subtask ids")
    edges = [tuple(e) for e in d.get("edges", [])]
    for e in edges:
        if len(e) != 2 or e[0] not in ids or e[1] not in ids:
            errors.append(f"invalid: dangling edge {list(e)}")
    edges = [e for e in edges if len(e) == 2 and e[0] in ids and e[1] in ids]
    if has_cycle(ids, edges):
        errors.append("invalid: cycle")
    for n in nodes:
        preds = n.get("predecessors")
        if preds is not None and sorted(preds) != sorted(a for a, b in edges if b == n["id"]):
            errors.append(f"invalid: predecessors of {n['id']} disagree with edges")
    if roster is not None:
        tools = {r.name: set(r.tools) for r in roster}
        for n in nodes:
            robot = n.get("robot")
            if robot not in tools:
                errors.append(f"invalid: unknown robot {robot!r} for {n['id']}")
                continue
            missing = sorted(set(n.get("tools", ())) - tools[robot])
            if missing:
                errors.append(f"invalid: {robot} lacks {missing} for {n['id']}")
    if scene is not None:
        goal = parse_goal(d["goal"], scene)
        covered = {tuple(e) for n in nodes for e in n.get("effects", ())}
        for pred in goal_predicates(goal, scene):
            if pred not in covered:
                errors.append(f"invalid: goal predicate {list(pred)} not covered")
    return errors


def tool_plan_errors(plans: Sequence[Any], graph: Any, roster: Sequence[RobotSpec]) -> List[str]:
    d = _as_dict(graph)
    robot_of = {n["id"]: n["robot"] for n in d["nodes"]}
    tools = {r.name: set(r.tools) for r in roster}
    errors = []
    for plan in plans:
        p = plan.to_dict() if hasattr(plan, "to_dict") else plan
        robot = robot_of.get(p["subtask_id"])
        if robot is None or robot != p["robot"]:
            errors.append(f"invalid: plan {p['subtask_id']} not bound to its subtask's robot")
            continue
        for step in p["steps"]:
            if step["call"]["tool"] not in tools.get(robot, ()):
                errors.append(f"invalid: {robot} does not own tool {step['call']['tool']}")
    return errors
