import json
from pathlib import Path

import pytest
import yaml
from click.testing import CliRunner

from stforge.cli import main
from stforge.scene_core import QAItem
from stforge.scene_core.io import read_shard, write_shard
from stforge.temporal_forge.actions import render_action
from stforge.temporal_forge.ota import choose_agent, plan_actions
from stforge.temporal_forge.simulator import WorldState
from stforge.temporal_forge.scenario import goal_predicates, instantiate_scenario, load_templates

COMMANDS = ["forge-spatial", "forge-temporal", "simulate", "evaluate", "score", "report"]


def invoke(*args, **kw):
    return CliRunner().invoke(main, [str(a) for a in args], catch_exceptions=False, **kw)


def files(root: Path):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.mark.parametrize("cmd", COMMANDS)
def test_help_documents_flags_and_unknown_flags_fail(cmd):
    res = invoke(cmd, "--help")
    assert res.exit_code == 0
    for opt in main.commands[cmd].params:
        if isinstance(opt, type(main.params[0])) and not opt.hidden:
            assert opt.opts[0] in res.output
    assert invoke(cmd, "--no-such-flag").exit_code == 2


def test_forge_spatial_determinism_across_workers(tmp_path):
    a = invoke("--output", tmp_path / "a", "--seed", 7, "forge-spatial", "--synthetic", 6)
    b = invoke("--output", tmp_path / "b", "--seed", 7, "--workers", 3, "forge-spatial", "--synthetic", 6)
    assert a.exit_code == 0 and b.exit_code == 0
    fa, fb = files(tmp_path / "a"), files(tmp_path / "b")
    assert fa == fb and "spatial/manifest.json" in fa
    man = json.loads(fa["spatial/manifest.json"])
    assert man["counts"]["pointing"] > 0 and "pointing" in a.output
    invoke("--output", tmp_path / "c", "--seed", 8, "forge-spatial", "--synthetic", 6)
    assert files(tmp_path / "c")["spatial/pointing.jsonl"] != fa["spatial/pointing.jsonl"]


def test_forge_spatial_family_caps_and_unknown_family(tmp_path):
    res = invoke("--output", tmp_path, "forge-spatial", "--synthetic", 6, "--family", "grounding:5",
                 "--family", "spatial_mc")
    assert res.exit_code == 0
    assert len(read_shard(tmp_path / "spatial" / "grounding.jsonl")) == 5
    assert not (tmp_path / "spatial" / "pointing.jsonl").exists()
    bad = invoke("--output", tmp_path, "forge-spatial", "--synthetic", 1, "--family", "juggling")
    assert bad.exit_code == 2 and "juggling" in bad.stderr


def test_forge_spatial_from_scene_files_and_empty_root(tmp_path):
    from stforge.scene_core.io import save_scene
    from stforge.scene_core.synthetic import random_scene
    scenes = tmp_path / "scenes"
    scenes.mkdir()
    for i in range(2):
        save_scene(random_scene(i), scenes / f"s{i}.json")
    res = invoke("--output", tmp_path / "o", "forge-spatial", "--scenes", scenes)
    assert res.exit_code == 0
    assert json.loads((tmp_path / "o/spatial/manifest.json").read_text())["scenes"] == 2
    empty = tmp_path / "empty"
    empty.mkdir()
    res = invoke("--output", tmp_path / "e", "forge-spatial", "--scenes", empty)
    assert res.exit_code == 0 and "no scenes" in res.stderr
    man = json.loads((tmp_path / "e/spatial/manifest.json").read_text())
    assert all(v == 0 for v in man["counts"].values())


def test_forge_spatial_bad_scene_is_validation_failure(tmp_path):
    scenes = tmp_path / "scenes"
    scenes.mkdir()
    (scenes / "broken.json").write_text('{"scene_id": "x",\n "nodes": [}')
    res = invoke("--output", tmp_path / "o", "forge-spatial", "--scenes", scenes)
    assert res.exit_code == 1 and "broken.json" in res.stderr


def test_occupancy_dump_flag(tmp_path):
    res = invoke("--output", tmp_path, "forge-spatial", "--synthetic", 2, "--family", "placement",
                 "--dump-occupancy")
    assert res.exit_code == 0
    dumps = sorted((tmp_path / "spatial" / "occupancy").glob("*.txt"))
    assert len(dumps) == 2 and set(dumps[0].read_text().strip()) - {"\n"}


def test_forge_temporal_manifest(tmp_path):
    res = invoke("--output", tmp_path / "a", "forge-temporal", "--per-template", 1, "--p", 0)
    again = invoke("--output", tmp_path / "b", "--workers", 4, "forge-temporal", "--per-template", 1, "--p", 0)
    assert res.exit_code == 0 and again.exit_code == 0
    assert files(tmp_path / "a") == files(tmp_path / "b")
    man = json.loads((tmp_path / "a/temporal/manifest.json").read_text())
    assert man["environments"] == ["household", "restaurant", "supermarket"]
    assert set(man["shards"]) >= {"workflows", "tool_plans", "episodes", "multirobot", "closeloop", "egoplan"}
    assert man["ota_replay_rate"] == 1.0
    assert man["stats"]["workflows_valid"] == man["stats"]["scenarios"]


def test_invalid_template_names_template(tmp_path):
    src = Path(__file__).resolve().parents[1] / "src/stforge/data/scenarios_v1.yaml"
    data = yaml.safe_load(src.read_text())
    data["templates"] = data["templates"][:1]
    data["templates"][0]["environment"] = "moon_base"
    bad = tmp_path / "bad.yaml"
    bad.write_text(yaml.safe_dump(data))
    res = invoke("--output", tmp_path / "o", "forge-temporal", "--templates", bad)
    assert res.exit_code == 1
    assert data["templates"][0]["id"] in res.stderr and "moon_base" in res.stderr


def _kitchen():
    return next(t for t in load_templates() if t.template_id == "household_kitchen")


def test_simulate_scripted_and_failure_rates(tmp_path):
    inst = instantiate_scenario(_kitchen(), 30)
    agent = choose_agent(inst).name
    actions, _ = plan_actions(WorldState.initial(inst.scene, inst.robots), goal_predicates(inst.goal, inst.scene),
                              agent)
    script = tmp_path / "plan.txt"
    script.write_text("\n".join(render_action(a, inst.scene) for a in actions) + "\n")
    ok = invoke("--output", tmp_path / "o", "simulate", "--template", "household_kitchen", "--instance-seed", 30,
                "--policy", "scripted", "--actions", script, "--p", 0)
    assert ok.exit_code == 0 and ok.stdout.startswith(f"outcome success steps {len(actions)}")
    limit = invoke("--output", tmp_path / "o", "simulate", "--template", "household_kitchen", "--instance-seed", 30,
                   "--p", 1, "--max-steps", 8)
    assert limit.exit_code == 0 and "outcome step-limit steps 8" in limit.output
    eps = sorted((tmp_path / "o" / "episodes").glob("*.jsonl"))
    assert eps and json.loads(eps[0].read_text())["outcome"] in ("success", "step-limit")
    assert invoke("--output", tmp_path, "simulate", "--template", "nowhere").exit_code == 2
    assert invoke("--output", tmp_path, "simulate", "--template", "household_kitchen",
                  "--policy", "scripted").exit_code == 2


def test_simulate_endpoint_policy_accepts_toggle(tmp_path, monkeypatch):
    inst = instantiate_scenario(_kitchen(), 30)
    assert "coffee machine" in inst.goal_text
    agent = choose_agent(inst).name
    actions, _ = plan_actions(WorldState.initial(inst.scene, inst.robots), goal_predicates(inst.goal, inst.scene),
                              agent)
    replies = [render_action(a, inst.scene) + "." for a in actions]
    assert "Toggle on Coffee Machine." in replies
    prompts = []

    def fake_query(endpoint, prompt, client=None):
        prompts.append(prompt)
        return f"<think>next step</think><answer>{replies[len(prompts) - 1]}</answer>"

    monkeypatch.setattr("stforge.cli.commands.query", fake_query)
    res = invoke("--output", tmp_path, "simulate", "--template", "household_kitchen", "--instance-seed", 30,
                 "--policy", "endpoint", "--endpoint-url", "http://mock.local/v1")
    assert res.exit_code == 0 and res.stdout.startswith("outcome success")
    ep = json.loads(next((tmp_path / "episodes").glob("*.jsonl")).read_text())
    toggle = [s for s in ep["steps"] if s["action_text"] == "Toggle on Coffee Machine"]
    assert len(toggle) == 1 and toggle[0]["feedback"]["status"] == "success"
    assert prompts[0].family == "closeloop" and "What is your next action?" in prompts[1].user_text
    assert "feedback of final action is success" in prompts[1].user_text


def _mc_shard(tmp_path, n=4):
    invoke("--output", tmp_path / "f", "forge-spatial", "--synthetic", 6, "--family", "spatial_mc")
    items = read_shard(tmp_path / "f/spatial/spatial_mc.jsonl")[:n]
    path = tmp_path / "mc.jsonl"
    write_shard(items, path)
    return items, path


def _preds(path, records):
    path.write_text("".join(json.dumps(r) + "\n" for r in records))
    return path


def test_score_ground_truth_and_ci_threshold(tmp_path):
    items, shard = _mc_shard(tmp_path)
    gt = _preds(tmp_path / "gt.jsonl", [{"item_id": it.item_id, "payload": it.answer} for it in items])
    res = invoke("--output", tmp_path / "o", "score", "--items", shard, "--predictions", gt, "--benchmark", "mc",
                 "--threshold", 0.8, "--ci")
    assert res.exit_code == 0 and "accuracy ↑" in res.output
    lines = [json.loads(l) for l in (tmp_path / "o/reports/mc.jsonl").read_text().splitlines()]
    assert all(l["score"] == 1.0 for l in lines if l["type"] == "item")

    wrong = [{"item_id": it.item_id, "raw_text": f"<answer>({it.answer})</answer>"} for it in items]
    wrong[0]["raw_text"] = "<answer>(A)</answer>" if items[0].answer != "A" else "<answer>(B)</answer>"
    bad = _preds(tmp_path / "bad.jsonl", wrong)
    res = invoke("--output", tmp_path / "o", "score", "--items", shard, "--predictions", bad, "--benchmark", "mc",
                 "--threshold", 0.8, "--ci")
    assert res.exit_code == 1 and "0.7500 below threshold 0.8" in res.stderr
    res = invoke("--output", tmp_path / "o", "score", "--items", shard, "--predictions", bad, "--benchmark", "mc",
                 "--threshold", 0.8)
    assert res.exit_code == 0

    rendered = invoke("report", tmp_path / "o/reports/mc.jsonl")
    assert rendered.exit_code == 0 and rendered.stdout.strip() == (tmp_path / "o/reports/mc.txt").read_text().strip()
    assert invoke("report", tmp_path / "o/reports/mc.jsonl", "--threshold", 0.8, "--ci").exit_code == 1


def test_missing_predictions_and_sources(tmp_path):
    items, shard = _mc_shard(tmp_path)
    part = _preds(tmp_path / "p.jsonl", [{"item_id": items[0].item_id, "payload": items[0].answer}])
    res = invoke("--output", tmp_path / "o", "score", "--items", shard, "--predictions", part)
    assert res.exit_code == 1 and "missing predictions for 3" in res.stderr
    assert invoke("--output", tmp_path / "o", "score", "--items", shard).exit_code == 2
    assert invoke("--output", tmp_path / "o", "score", "--items", shard, "--predictions", part,
                  "--benchmark", "../escape").exit_code == 2


def test_evaluate_unreachable_endpoint(tmp_path):
    items, shard = _mc_shard(tmp_path, 1)
    res = invoke("--output", tmp_path / "o", "evaluate", "--items", shard, "--endpoint-url", "http://127.0.0.1:9",
                 "--retries", 0, "--timeout", 2)
    assert res.exit_code == 1 and "transport" in res.stderr


def test_trajectory_report_has_mean_dfd(tmp_path):
    items = [QAItem(f"t{i}", "trajectory", "Reach for the cup", ("img.jpg",), "trajectory",
                    [[10, 10], [100, 40 + i]], image_size=(480, 480)) for i in range(3)]
    shard = tmp_path / "traj.jsonl"
    write_shard(items, shard)
    preds = _preds(tmp_path / "p.jsonl", [{"item_id": it.item_id, "payload": [[10, 58], [100, 88 + i]]}
                                          for i, it in enumerate(items)])
    res = invoke("--output", tmp_path / "o", "score", "--items", shard, "--predictions", preds, "--benchmark", "traj")
    assert res.exit_code == 0 and "dfd ↓" in res.output
    summary = json.loads((tmp_path / "o/reports/traj.jsonl").read_text().splitlines()[-1])
    assert summary["mean_dfd"] == pytest.approx(0.1)


def test_config_file_interpolation_and_flag_override(tmp_path, monkeypatch):
    monkeypatch.setenv("STF_N", "3")
    cfg = tmp_path / "run.yaml"
    cfg.write_text(f"seed: 5\noutput: {tmp_path / 'cfgout'}\nforge_spatial:\n  synthetic_scenes: ${{STF_N}}\n"
                   f"  families: [grounding, pointing:2]\n  cell_size: ${{STF_CELL:-0.05}}\n")
    res = invoke("--config", cfg, "forge-spatial")
    assert res.exit_code == 0
    man = json.loads((tmp_path / "cfgout/spatial/manifest.json").read_text())
    assert man["config"]["synthetic_scenes"] == 3 and man["config"]["seed"] == 5
    assert man["counts"]["pointing"] == 2 and set(man["counts"]) == {"grounding", "pointing"}
    res = invoke("--config", cfg, "--seed", 9, "--output", tmp_path / "flag", "forge-spatial", "--synthetic", 1)
    man = json.loads((tmp_path / "flag/spatial/manifest.json").read_text())
    assert man["config"]["seed"] == 9 and man["config"]["synthetic_scenes"] == 1 and man["scenes"] == 1


def test_config_errors_report_file_and_line(tmp_path):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text("seed: 1\nforge_spatial:\n  synthetic_scenes: ${STF_UNSET_VAR}\n")
    res = invoke("--config", cfg, "forge-spatial")
    assert res.exit_code == 2 and "bad.yaml" in res.stderr and "line 3" in res.stderr
    cfg.write_text("seed: 1\nforge_spatial: [unclosed\n")
    res = invoke("--config", cfg, "forge-spatial")
    assert res.exit_code == 2 and "bad.yaml" in res.stderr and "line" in res.stderr
    cfg.write_text("forge_spatial:\n  families: [teleport]\n")
    assert invoke("--config", cfg, "--output", tmp_path, "forge-spatial").exit_code == 2


def test_debug_logs_are_jsonl_inside_output(tmp_path):
    res = invoke("--output", tmp_path, "--log-level", "debug", "forge-spatial", "--synthetic", 2)
    assert res.exit_code == 0
    logs = (tmp_path / "logs" / "forge-spatial.jsonl").read_text().splitlines()
    recs = [json.loads(l) for l in logs]
    assert recs and all(r["level"] in ("debug", "info", "warning") for r in recs)
    assert any("scene" in r for r in recs)
    written = [p for p in tmp_path.rglob("*") if p.is_file()]
    assert all(tmp_path in p.parents for p in written)
