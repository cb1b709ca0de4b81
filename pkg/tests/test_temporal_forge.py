import itertools
import random
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stforge.temporal_forge import (
    FAILURE_TABLE,
    Action,
    LocationSpec,
    RobotSpec,
    ScenarioError,
    ScenarioInstance,
    ScriptedPolicy,
    TaskScene,
    WorkflowError,
    WorldState,
    action_vocabulary,
    apply_action,
    count_task_types,
    decompose,
    emit_tool_plan,
    forge_temporal,
    gen_egoplan_item,
    goal_predicates,
    instantiate_scenario,
    is_progress,
    load_templates,
    parse_action,
    parse_goal,
    parse_templates,
    precondition_error,
    render_action,
    replay,
    replay_tool_plans,
    simulate_episode,
    state_before,
    synthesize_ota,
    tool_plan_errors,
    workflow_errors,
)
from stforge.temporal_forge.scenario import Goal
from stforge.temporal_forge.workflow import WorkflowGraph

TEMPLATES = load_templates()
BY_ID = {t.template_id: t for t in TEMPLATES}


def _instance(template_id, seed, schema=None, slots=None):
    tpl = BY_ID[template_id]
    if schema is None:
        return instantiate_scenario(tpl, seed)
    idx = [g.schema for g in tpl.goals].index(schema)
    inst = instantiate_scenario(tpl, seed, idx)
    if slots is None:
        return inst
    from stforge.temporal_forge.scenario import render_goal
    goal = Goal(schema, slots, render_goal(schema, slots))
    return ScenarioInstance(inst.template_id, seed, inst.scene, inst.robots, goal)


# --- oracles -------------------------------------------------------------------------


def topo_orders_exist(node_ids, edges):
    """Brute force: some permutation of the nodes respects every edge."""
    for perm in itertools.permutations(node_ids):
        pos = {n: i for i, n in enumerate(perm)}
        if all(pos[a] < pos[b] for a, b in edges):
            return True
    return False


def reachable(edges, a, b):
    frontier, seen = {a}, set()
    while frontier:
        n = frontier.pop()
        seen.add(n)
        for x, y in edges:
            if x == n and y not in seen:
                if y == b:
                    return True
                frontier.add(y)
    return False


# --- scenarios ------------------------------------------------------------------------


def test_template_pack_covers_three_environments_at_scale():
    envs = Counter(t.environment for t in TEMPLATES)
    assert set(envs) == {"household", "supermarket", "restaurant"}
    assert all(n >= 3 for n in envs.values())
    assert count_task_types(TEMPLATES) >= 1659


def test_instantiation_is_deterministic():
    tpl = BY_ID["restaurant_fast_food"]
    a, b = instantiate_scenario(tpl, 7), instantiate_scenario(tpl, 7)
    assert a.to_dict() == b.to_dict()
    scene, roster, goal = a
    assert scene is a.scene and roster == a.robots and goal == a.goal_text


def test_burger_slot_filled_from_vocabulary():
    tpl = BY_ID["restaurant_fast_food"]
    seen = set()
    for seed in range(60):
        inst = instantiate_scenario(tpl, seed, [g.schema for g in tpl.goals].index("cook_and_serve"))
        seen.add(inst.goal.slots["dish"])
        assert inst.goal_text.startswith("Cook ")
    assert "burger" in seen


def _yaml_with(replace_from, replace_to):
    from importlib import resources
    text = resources.files("stforge.data").joinpath("scenarios_v1.yaml").read_text()
    assert replace_from in text
    return text.replace(replace_from, replace_to, 1)


def test_roster_missing_goal_tool_fails_at_load():
    text = _yaml_with("tools: [navigate, pick, place, open, close, search, open_gift_bag, toggle, done]",
                      "tools: [navigate, pick, place, open, close, search, toggle, done]")
    with pytest.raises(ScenarioError, match="open_gift_bag"):
        parse_templates(text)


def test_containment_cycle_rejected():
    text = _yaml_with("{name: counter, type: counter, pos: [2, 1]}",
                      "{name: counter, type: counter, pos: [2, 1], inside: drawer}")
    with pytest.raises(ScenarioError, match="cycle"):
        parse_templates(text)


def test_duplicate_robot_tools_rejected():
    with pytest.raises(ScenarioError, match="duplicate"):
        RobotSpec("r", "single_arm", ("pick", "pick"), "x")


@settings(max_examples=60, deadline=None)
@given(st.integers(0, len(TEMPLATES) - 1), st.integers(0, 10_000))
def test_goal_text_parses_back(ti, seed):
    inst = instantiate_scenario(TEMPLATES[ti], seed)
    goal = parse_goal(inst.goal_text, inst.scene)
    assert (goal.schema, dict(goal.slots)) == (inst.goal.schema, dict(inst.goal.slots))
    state = WorldState.initial(inst.scene, inst.robots)
    assert not all(state.holds(p) for p in goal_predicates(inst.goal, inst.scene))


def test_unregistered_goal_rejected():
    inst = instantiate_scenario(TEMPLATES[0], 0)
    with pytest.raises(ScenarioError, match="no registered goal schema"):
        parse_goal("Dance with the fridge", inst.scene)


# --- actions -------------------------------------------------------------------------


def test_action_render_parse_round_trip_over_every_vocabulary():
    for tpl in TEMPLATES:
        scene = instantiate_scenario(tpl, 0).scene
        for a in action_vocabulary(scene):
            text = render_action(a, scene)
            assert parse_action(text, scene).key() == a.key()
            assert parse_action(text.upper() + ".", scene).key() == a.key()


def test_example_action_surfaces_parse():
    kitchen = instantiate_scenario(BY_ID["household_kitchen"], 0).scene
    assert parse_action("Toggle on Coffee Machine.", kitchen).key() == ("toggle", "coffee_machine", None, "on")
    assert parse_action("Pour oil.", kitchen).key() == ("place", "hob", "oil", None)


# --- decomposition ---------------------------------------------------------------------


def test_two_parallel_fetches_precede_delivery():
    inst = _instance("household_kitchen", 3, "fetch_items", {"a": "orange", "b": "knife"})
    kinds = {r.embodiment for r in inst.robots}
    assert kinds == {"single_arm", "dual_arm"}
    wf = decompose("Give me an orange and a knife", inst.scene, inst.robots)
    fetches = [s for s in wf.subtasks if s.kind == "fetch"]
    deliver = [s for s in wf.subtasks if s.kind == "deliver"]
    assert len(fetches) == 2 and len(deliver) == 1
    f1, f2 = fetches
    assert not reachable(wf.edges, f1.id, f2.id) and not reachable(wf.edges, f2.id, f1.id)
    assert all(reachable(wf.edges, f.id, deliver[0].id) for f in fetches)
    assert topo_orders_exist([s.id for s in wf.subtasks], wf.edges)
    assert workflow_errors(wf, inst.robots, inst.scene) == []
    assert all(s.rationale for s in wf.subtasks)


def test_no_capable_robot_names_missing_tool():
    inst = _instance("household_study", 1, "gift_packing")
    crippled = tuple(RobotSpec(r.name, r.embodiment, tuple(t for t in r.tools if t != "open_gift_bag"), r.location)
                     for r in inst.robots)
    with pytest.raises(WorkflowError, match="no capable robot: open_gift_bag"):
        decompose(inst.goal_text, inst.scene, crippled)


def test_single_robot_yields_linear_chain():
    for template_id, schema in [("household_kitchen", "cook_dish"), ("household_kitchen", "fetch_items"),
                                ("household_kitchen", "put_away")]:
        inst = _instance(template_id, 5, schema)
        solo = (next(r for r in inst.robots if r.name == "realman"),)
        wf = decompose(inst.goal_text, inst.scene, solo)
        ids = [s.id for s in wf.topological_order()]
        for a, b in zip(ids, ids[1:]):
            assert reachable(wf.edges, a, b)


@settings(max_examples=80, deadline=None)
@given(st.integers(0, len(TEMPLATES) - 1), st.integers(0, 10_000))
def test_every_workflow_passes_brute_force_checks(ti, seed):
    inst = instantiate_scenario(TEMPLATES[ti], seed)
    wf = decompose(inst.goal_text, inst.scene, inst.robots)
    ids = [s.id for s in wf.subtasks]
    assert topo_orders_exist(ids, wf.edges)
    tools = {r.name: set(r.tools) for r in inst.robots}
    for s in wf.subtasks:
        assert set(s.tools) <= tools[s.robot]
    covered = {e for s in wf.subtasks for e in s.effects}
    assert set(goal_predicates(inst.goal, inst.scene)) <= covered
    plans = emit_tool_plan(wf, inst.scene, inst.robots)
    assert tool_plan_errors(plans, wf, inst.robots) == []
    for plan in plans:
        for _, call in plan.steps:
            assert call.tool in tools[plan.robot]
    assert replay_tool_plans(plans, inst).outcome == "success"


def test_validator_detects_cycle_and_bad_assignment():
    inst = instantiate_scenario(TEMPLATES[0], 2)
    wf = decompose(inst.goal_text, inst.scene, inst.robots)
    d = wf.to_dict()
    ids = [n["id"] for n in d["nodes"]]
    d["edges"] = d["edges"] + [[ids[-1], ids[0]]]
    for n in d["nodes"]:
        n.pop("predecessors")
    assert "invalid: cycle" in workflow_errors(d)
    d2 = wf.to_dict()
    d2["nodes"][0]["robot"] = "ghost"
    assert any("unknown robot" in e for e in workflow_errors(d2, inst.robots))
    assert WorkflowGraph.from_dict(wf.to_dict()) == wf


def test_fetch_tool_plan_skeleton():
    scene = TaskScene("tiny", "supermarket", "counter",
                      (LocationSpec("shelf", "shelf", (0.0, 0.0)), LocationSpec("counter", "counter", (3.0, 0.0)),
                       LocationSpec("dock", "dock", (1.0, 1.0))),
                      {"orange": "shelf", "knife": "dock"})
    robot = RobotSpec("bot", "single_arm", ("navigate", "pick", "place", "done"), "dock")
    goal = Goal("restock", {"item": "orange", "shelf": "counter"}, "Restock an orange on the counter")
    wf = decompose(goal.text, scene, (robot,))
    (plan,) = emit_tool_plan(wf, scene, (robot,))
    calls = [(c.tool, dict(c.args)) for _, c in plan.steps]
    assert calls == [("navigate", {"target": "shelf"}), ("pick", {"object": "orange"}),
                     ("navigate", {"target": "counter"}), ("place", {"object": "orange", "target": "counter"})]
    obs = [o for o, _ in plan.steps]
    assert obs[2] == "holding(bot, orange)" and obs[3] == "at(bot, counter)"
    inst = ScenarioInstance("tiny", 0, scene, (robot,), goal)
    assert replay_tool_plans([plan], inst).outcome == "success"


def test_dangling_object_reference_rejected():
    inst = _instance("household_kitchen", 3, "fetch_items", {"a": "orange", "b": "knife"})
    wf = decompose(inst.goal_text, inst.scene, inst.robots)
    d = wf.to_dict()
    d["nodes"][0]["args"]["object"] = "unicorn"
    with pytest.raises(WorkflowError, match="dangling object"):
        emit_tool_plan(WorkflowGraph.from_dict(d), inst.scene, inst.robots)


# --- simulator ------------------------------------------------------------------------


def test_scripted_optimal_policy_at_zero_failure_rate():
    inst = _instance("household_kitchen", 4, "switch_on", {"appliance": "coffee_machine", "receptacle": "fridge"})
    ep = synthesize_ota(inst, seed=1)
    assert ep.outcome == "success"
    assert all(s.feedback.status == "success" for s in ep.steps)
    assert ep.failure_counts()[0] == 0
    texts = [s.action_text for s in ep.steps]
    assert texts.index("Open Fridge") < texts.index("Toggle on Coffee Machine")


def test_failure_rate_one_hits_step_limit():
    inst = instantiate_scenario(TEMPLATES[1], 3)
    ep = synthesize_ota(inst, seed=3, p=1.0, max_steps=25)
    assert ep.outcome == "step-limit" and len(ep.steps) == 25
    injected, eligible = ep.failure_counts()
    assert injected == eligible == 25
    for s in ep.steps:
        assert s.feedback.reason in FAILURE_TABLE[s.action.verb]


def test_hidden_objects_absent_from_observation_until_revealed():
    inst = _instance("household_kitchen", 0, "put_away", {"item": "mug", "receptacle": "fridge"})
    scene = inst.scene
    hidden = [o for o, l in scene.placements.items() if scene.location(l).openable]
    assert hidden
    ep = synthesize_ota(inst, seed=0)
    first = ep.steps[0].observation.text
    for o in hidden:
        assert f"{o.replace('_', ' ')} at" not in first


def test_mug_in_closed_cabinet_is_opened_then_searched_first():
    inst = _instance("household_kitchen", 0, "fetch_items", {"a": "mug", "b": "orange"})
    scene = TaskScene(inst.scene.scene_id, inst.scene.environment, inst.scene.user_location,
                      inst.scene.locations, {**inst.scene.placements, "mug": "cabinet", "orange": "kitchen_table"},
                      inst.scene.pour_into)
    inst = ScenarioInstance(inst.template_id, 0, scene, inst.robots, inst.goal)
    ep = synthesize_ota(inst, seed=0)
    keys = [s.action.key() for s in ep.steps]
    pick = keys.index(("pick", None, "mug", None))
    assert keys.index(("open", "cabinet", None, None)) < pick
    assert keys.index(("search", "cabinet", None, None)) < pick
    assert replay(ep).outcome == "success"


@settings(max_examples=40, deadline=None)
@given(st.integers(0, len(TEMPLATES) - 1), st.integers(0, 10_000), st.sampled_from([0.0, 0.2, 0.5]))
def test_synthesized_episodes_replay_to_success(ti, seed, p):
    inst = instantiate_scenario(TEMPLATES[ti], seed)
    ep = synthesize_ota(inst, seed=seed, p=p)
    assert ep.outcome == "success"
    assert replay(ep).outcome == "success"
    assert ep.steps[0].thought
    hidden_targets = {p_[1] for p_ in ep.goal if p_[0] in ("at", "cooked")
                      and p_[1] not in WorldState.initial(inst.scene, inst.robots).discovered}
    for obj in hidden_targets:
        keys = [s.action.key() for s in ep.steps if s.feedback.status == "success"]
        first_pick = keys.index(("pick", None, obj, None))
        assert any(k[0] == "search" for k in keys[:first_pick])
    for s in ep.steps:
        if s.feedback.injected:
            nxt = ep.steps[s.index + 1]
            assert nxt.thought and "failed" in nxt.thought


@settings(max_examples=40, deadline=None)
@given(st.integers(0, len(TEMPLATES) - 1), st.integers(0, 10_000))
def test_state_machine_soundness_under_random_policy(ti, seed):
    inst = instantiate_scenario(TEMPLATES[ti], seed)
    vocab = [a for a in action_vocabulary(inst.scene) if a.verb != "done"]
    rng = random.Random(seed)
    robots = [r.name for r in inst.robots]
    state = WorldState.initial(inst.scene, inst.robots)
    for _ in range(120):
        a = rng.choice(vocab).with_robot(rng.choice(robots))
        if precondition_error(state, a) is None:
            apply_action(state, a)
        state.check_invariants()
        for o, loc in state.obj_loc.items():
            if loc is not None and state.is_closed(loc) and o not in state.discovered:
                assert o not in str(state.robot_loc)


def test_episode_determinism_and_serialization():
    inst = instantiate_scenario(TEMPLATES[4], 11)
    a = synthesize_ota(inst, seed=5, p=0.3)
    b = synthesize_ota(inst, seed=5, p=0.3)
    assert a.to_dict() == b.to_dict()
    from stforge.temporal_forge import Episode
    assert Episode.from_dict(a.to_dict()).to_dict() == a.to_dict()


def test_text_policy_and_unparseable_actions():
    inst = _instance("household_kitchen", 4, "switch_on", {"appliance": "coffee_machine", "receptacle": "fridge"})
    script = iter(["Fly to the moon", "Navigate to Fridge", "Open Fridge.", "Navigate to Coffee Machine",
                   "Toggle on Coffee Machine."])
    ep = simulate_episode(inst, lambda ctx: next(script), p=0.0, max_steps=10)
    assert ep.steps[0].action is None and "unparseable" in ep.steps[0].feedback.reason
    assert ep.outcome == "success"


# --- ego planning --------------------------------------------------------------------


def test_pour_oil_step_of_cooking_episode():
    inst = _instance("household_kitchen", 1, "cook_dish", {"ingredient": "onion"})
    assert inst.goal_text == "Prepare and cook the onion"
    ep = synthesize_ota(inst, seed=1)
    idx = [s.action_text for s in ep.steps].index("Pour oil")
    item = gen_egoplan_item(ep, idx, seed=0)
    assert item.correct_option == "Pour oil"
    assert 2 <= len(item.options) <= 4 and len(set(item.options)) == len(item.options)
    assert item.history_frames == tuple(s.observation.frame for s in ep.steps[:idx])


def test_egoplan_options_have_exactly_one_correct():
    checked = 0
    for tpl in TEMPLATES:
        for seed in range(3):
            ep = synthesize_ota(instantiate_scenario(tpl, seed), seed=seed)
            for i in range(1, len(ep.steps)):
                item = gen_egoplan_item(ep, i, seed=seed)
                if item is None:
                    continue
                state = state_before(ep, i)
                robot = ep.steps[i].action.robot
                correct = [o for o in item.options
                           if is_progress(state, parse_action(o, ep.scenario.scene, robot), ep.goal, robot)]
                assert correct == [item.correct_option]
                assert len(item.options) == 4
                checked += 1
    assert checked > 100


def test_option_count_tracks_pool_size():
    ep = synthesize_ota(instantiate_scenario(TEMPLATES[0], 2), seed=2)
    for n in range(0, 4):
        item = gen_egoplan_item(ep, 1, seed=0, n_distractors=n)
        if n == 0:
            assert item is None
        else:
            assert len(item.options) == 1 + n


def test_egoplan_preconditions():
    ep = synthesize_ota(instantiate_scenario(TEMPLATES[0], 2), seed=2)
    with pytest.raises(ValueError):
        gen_egoplan_item(ep, 0)
    with pytest.raises(ValueError):
        gen_egoplan_item(ep, len(ep.steps))


def test_gt_letters_uniform_chi_square():
    counts = Counter()
    episodes = [synthesize_ota(instantiate_scenario(tpl, s), seed=s) for tpl in TEMPLATES for s in range(12)]
    seed = 0
    while sum(counts.values()) < 10_000:
        for ep in episodes:
            for i in range(1, len(ep.steps)):
                item = gen_egoplan_item(ep, i, seed=seed)
                if item is not None:
                    counts[item.answer] += 1
        seed += 1
    n = sum(counts.values())
    chi2 = sum((counts[l] - n / 4) ** 2 / (n / 4) for l in "ABCD")
    # 3 degrees of freedom, alpha = 0.001
    assert chi2 < 16.27, (counts, chi2)


# --- orchestration ------------------------------------------------------------------


def test_forge_temporal_deterministic_with_full_replay():
    a = forge_temporal(per_template=2, seed=9)
    b = forge_temporal(per_template=2, seed=9)
    assert [i.to_dict() for i in a.items] == [i.to_dict() for i in b.items]
    n = len(TEMPLATES) * 2
    assert a.stats == {"scenarios": n, "workflows_valid": n, "toolplan_replay_success": n,
                       "episodes": n, "ota_replay_success": n}
    fams = Counter(i.family for i in a.items)
    assert set(fams) == {"multirobot", "closeloop", "egoplan"}
    with pytest.raises(ValueError, match="unknown temporal family"):
        forge_temporal(per_template=1, families=("dance",))


def test_scripted_policy_retries_until_success():
    inst = instantiate_scenario(TEMPLATES[2], 8)
    plan = synthesize_ota(inst, seed=0).action_sequence()
    ep = simulate_episode(inst, ScriptedPolicy(plan), p=0.4, max_steps=400, seed=3)
    assert ep.outcome == "success"
    assert [a.key() for a in ep.action_sequence()] == [a.key() for a in plan]
    assert Action("done").verb == "done"
