"""``stforge`` command line: forge shards, simulate episodes, evaluate and report."""

from __future__ import annotations

import json
import logging
import random
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import click

from ..geometry3d.occupancy import build_occupancy
from ..eval_harness.report import EvalReport, ReportError
from ..model_client.benchmark import BenchmarkError, run_benchmark
from ..model_client.client import EndpointConfig, EndpointError, query
from ..model_client.grammar import parse_answer
from ..model_client.prompts import PromptSpec
from ..refer_forge.forge import SPATIAL_FAMILIES, ForgeLog, forge_scene
from ..refer_forge.templates import TemplateError, TemplatePack
from ..scene_core.io import derive_seed, load_scene, read_shard, write_jsonl, write_shard
from ..scene_core.synthetic import random_scene
from ..scene_core.types import QAItem, SceneValidationError
from ..temporal_forge.actions import ActionError, parse_action
from ..temporal_forge.items import TEMPORAL_FAMILIES, forge_temporal
from ..temporal_forge.ota import choose_agent, synthesize_ota
from ..temporal_forge.scenario import ScenarioError, instantiate_scenario, load_templates
from ..temporal_forge.simulator import PolicyContext, ScriptedPolicy, simulate_episode
from .config import (
    ConfigError,
    EvalConfig,
    ForgeConfig,
    digest,
    load_config,
    parse_family_counts,
    section,
)

log = logging.getLogger("stforge")


class _JsonFormatter(logging.Formatter):
    def format(self, record: logging.LogRecord) -> str:
        out = {"level": record.levelname.lower(), "logger": record.name, "msg": record.getMessage()}
        out.update(getattr(record, "fields", {}))
        return json.dumps(out, sort_keys=True, default=str)


def _setup_logging(level: str, output: Path, command: str) -> None:
    root = logging.getLogger("stforge")
    root.handlers.clear()
    root.setLevel(logging.DEBUG if level == "debug" else logging.INFO)
    human = logging.StreamHandler(sys.stderr)
    human.setLevel(logging.INFO if level != "debug" else logging.INFO)
    human.setFormatter(logging.Formatter("%(levelname)s %(message)s"))
    root.addHandler(human)
    if level == "debug":
        path = _inside(output, "logs", f"{command}.jsonl")
        path.parent.mkdir(parents=True, exist_ok=True)
        fh = logging.FileHandler(path, mode="w", encoding="utf-8")
        fh.setLevel(logging.DEBUG)
        fh.setFormatter(_JsonFormatter())
        root.addHandler(fh)


def _inside(root: Path, *parts: str) -> Path:
    """Path under the output root; anything resolving outside it is refused."""
    base = root.resolve()
    path = base.joinpath(*parts).resolve()
    if path != base and base not in path.parents:
        raise click.UsageError(f"refusing to write outside the output root: {path}")
    return path


class Ctx:
    def __init__(self, config: Dict[str, Any], seed: Optional[int], workers: int, output: Optional[str],
                 log_level: str):
        self.config = config
        self.seed = seed
        self.workers = workers
        self.output = output
        self.log_level = log_level

    def sec(self, name: str) -> Dict[str, Any]:
        try:
            return section(self.config, name)
        except ConfigError as exc:
            raise click.UsageError(str(exc)) from None

    def pick(self, sec: Dict[str, Any], key: str, flag: Any, default: Any) -> Any:
        """Flags override the config file, which overrides built-in defaults."""
        if flag is not None and flag != ():
            return flag
        return sec.get(key, default)

    def out_root(self, sec: Dict[str, Any]) -> Path:
        return Path(self.output or sec.get("output") or self.config.get("output") or "out")

    def the_seed(self, sec: Dict[str, Any]) -> int:
        if self.seed is not None:
            return self.seed
        return int(sec.get("seed", self.config.get("seed", 0)))


def _fail(msg: str) -> None:
    raise click.ClickException(msg)


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
              help="YAML config; ${VAR} and ${VAR:-default} are read from the environment.")
@click.option("--seed", type=int, default=None, help="Global seed (overrides the config file).")
@click.option("--workers", type=click.IntRange(1), default=1, show_default=True,
              help="Worker threads for per-scene / per-template / per-item work.")
@click.option("--output", type=click.Path(file_okay=False), default=None,
              help="Output root; every file a command writes lands under it.")
@click.option("--log-level", type=click.Choice(["info", "debug"]), default="info", show_default=True,
              help="debug also writes structured JSONL logs under <output>/logs.")
@click.version_option(package_name="artifact")
@click.pass_context
def main(ctx: click.Context, config_path, seed, workers, output, log_level):
    """Forge embodied spatial/temporal QA shards and score model predictions on them."""
    try:
        cfg = load_config(config_path)
    except (ConfigError, OSError) as exc:
        raise click.UsageError(str(exc)) from None
    ctx.obj = Ctx(cfg, seed, workers, output, log_level)


def _manifest(path: Path, command: str, cfg_snapshot: Dict[str, Any], shards: Dict[str, Dict[str, Any]],
              extra: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    man = {"command": command, "config": cfg_snapshot, "config_digest": digest(cfg_snapshot),
           "shards": {k: {"count": v["count"], "sha256": v["sha256"]} for k, v in sorted(shards.items())}}
    if extra:
        man.update(extra)
    path.write_text(json.dumps(man, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return man


def _cap(items: List[QAItem], n: Optional[int], seed: int, family: str) -> List[QAItem]:
    if n is None or len(items) <= n:
        return items
    keep = set(random.Random(derive_seed("cap", family, seed)).sample(range(len(items)), n))
    return [it for i, it in enumerate(items) if i in keep]


# --- forge-spatial --------------------------------------------------------------------------


@main.command("forge-spatial")
@click.option("--scenes", "scene_roots", multiple=True, type=click.Path(file_okay=False),
              help="Directory of scene annotation JSON files (repeatable).")
@click.option("--synthetic", "synthetic", type=click.IntRange(0), default=None,
              help="Also forge this many seeded synthetic scenes.")
@click.option("--family", "families", multiple=True,
              help=f"Family to forge, optionally with a cap, e.g. grounding:100. Choices: {', '.join(SPATIAL_FAMILIES)}.")
@click.option("--templates", type=click.Path(dir_okay=False), default=None, help="Question template pack.")
@click.option("--cell-size", type=float, default=None, help="Occupancy cell size in meters.")
@click.option("--dump-occupancy", is_flag=True, default=False,
              help="Debug: write an ASCII rendering of each scene's occupancy grid under spatial/occupancy.")
@click.pass_obj
def forge_spatial(obj: Ctx, scene_roots, synthetic, families, templates, cell_size, dump_occupancy):
    """Forge pointing, grounding, affordance, referring, placement and MC shards from scenes."""
    sec = obj.sec("forge_spatial")
    try:
        cfg = ForgeConfig(
            kind="spatial",
            families=parse_family_counts(obj.pick(sec, "families", families, None), SPATIAL_FAMILIES),
            seed=obj.the_seed(sec),
            scene_roots=tuple(obj.pick(sec, "scene_roots", scene_roots, ())),
            synthetic_scenes=int(obj.pick(sec, "synthetic_scenes", synthetic, 0)),
            templates=obj.pick(sec, "templates", templates, None),
            cell_size=float(obj.pick(sec, "cell_size", cell_size, 0.05)),
            output=str(obj.out_root(sec)),
        )
    except ConfigError as exc:
        raise click.UsageError(str(exc)) from None
    out = Path(cfg.output)
    _setup_logging(obj.log_level, out, "forge-spatial")
    try:
        pack = TemplatePack.load(cfg.templates) if cfg.templates else None
    except (TemplateError, OSError) as exc:
        _fail(str(exc))

    sources: List[Any] = []
    for root in cfg.scene_roots:
        sources += [p for p in sorted(Path(root).rglob("*.json")) if not p.name.endswith(".manifest.json")]
    sources += [("synthetic", i) for i in range(cfg.synthetic_scenes)]
    if not sources:
        log.warning("no scenes found; nothing to forge")

    fams = tuple(f for f in SPATIAL_FAMILIES if f in cfg.families)

    def run(src):
        if isinstance(src, Path):
            scene = load_scene(src)
        else:
            i = src[1]
            scene = random_scene(derive_seed("cli-scene", cfg.seed, i) % (1 << 32), masks=i % 2 == 1,
                                 point_annotations=i % 3 == 0, scene_id=f"synthetic_{i:05d}")
        flog = ForgeLog()
        grid = None
        if dump_occupancy and any(n.box3d is not None for n in scene.nodes):
            grid = build_occupancy(scene, cfg.cell_size)
        items = forge_scene(scene, fams, seed=cfg.seed, templates=pack, grid=grid, cell_size=cfg.cell_size,
                            log_=flog)
        if grid is not None:
            name = re.sub(r"[^A-Za-z0-9_.-]", "_", scene.scene_id) + ".txt"
            path = _inside(out, "spatial", "occupancy", name)
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(grid.ascii() + "\n", encoding="utf-8")
        log.debug("forged scene", extra={"fields": {"scene": scene.scene_id,
                                                      "counts": {k: len(v) for k, v in items.items()}}})
        return items, flog.entries

    try:
        with ThreadPoolExecutor(max_workers=obj.workers) as pool:
            results = list(pool.map(run, sources))
    except (SceneValidationError, OSError, ValueError) as exc:
        _fail(f"validation failed: {exc}")

    shards: Dict[str, Dict[str, Any]] = {}
    counts: Dict[str, int] = {}
    for fam in fams:
        items = [it for res, _ in results for it in res.get(fam, [])]
        items = _cap(items, cfg.families[fam], cfg.seed, fam)
        try:
            shards[fam] = write_shard(items, _inside(out, "spatial", f"{fam}.jsonl"))
        except SceneValidationError as exc:
            _fail(f"validation failed: {exc}")
        counts[fam] = len(items)
    log_entries = [e.to_dict() for _, entries in results for e in entries]
    shards["forge_log"] = write_jsonl(log_entries, _inside(out, "spatial", "forge_log.jsonl"))
    _manifest(_inside(out, "spatial", "manifest.json"), "forge-spatial", cfg.snapshot(), shards,
              {"scenes": len(sources), "counts": counts})
    for fam in fams:
        click.echo(f"{fam:<12} {counts[fam]:>7}")
    click.echo(f"{'scenes':<12} {len(sources):>7}")


# --- forge-temporal -------------------------------------------------------------------------


@main.command("forge-temporal")
@click.option("--templates", type=click.Path(dir_okay=False), default=None, help="Scenario template YAML.")
@click.option("--per-template", type=click.IntRange(0), default=None, help="Scenario instances per template.")
@click.option("--p", "failure_rate", type=click.FloatRange(0, 1), default=None,
              help="Per-action failure injection rate for OTA episodes.")
@click.option("--family", "families", multiple=True,
              help=f"Family to forge, optionally capped. Choices: {', '.join(TEMPORAL_FAMILIES)}.")
@click.pass_obj
def forge_temporal_cmd(obj: Ctx, templates, per_template, failure_rate, families):
    """Forge workflow, tool-plan, OTA episode, multirobot, closeloop and EgoPlan shards."""
    sec = obj.sec("forge_temporal")
    try:
        cfg = ForgeConfig(
            kind="temporal",
            families=parse_family_counts(obj.pick(sec, "families", families, None), TEMPORAL_FAMILIES),
            seed=obj.the_seed(sec),
            templates=obj.pick(sec, "templates", templates, None),
            per_template=int(obj.pick(sec, "per_template", per_template, 3)),
            failure_rate=float(obj.pick(sec, "failure_rate", failure_rate, 0.2)),
            output=str(obj.out_root(sec)),
        )
    except ConfigError as exc:
        raise click.UsageError(str(exc)) from None
    out = Path(cfg.output)
    _setup_logging(obj.log_level, out, "forge-temporal")
    try:
        tpls = load_templates(cfg.templates)
    except (ScenarioError, OSError) as exc:
        _fail(str(exc))
    fams = tuple(f for f in TEMPORAL_FAMILIES if f in cfg.families)

    def run(tpl):
        return forge_temporal([tpl], per_template=cfg.per_template, seed=cfg.seed, p=cfg.failure_rate,
                              families=fams)

    try:
        with ThreadPoolExecutor(max_workers=obj.workers) as pool:
            results = list(pool.map(run, tpls))
    except (ScenarioError, ValueError, AssertionError) as exc:
        _fail(f"validation failed: {exc}")

    stats: Dict[str, int] = {}
    for r in results:
        for k, v in r.stats.items():
            stats[k] = stats.get(k, 0) + v
    shards: Dict[str, Dict[str, Any]] = {}
    counts: Dict[str, int] = {}
    for fam in fams:
        items = _cap([it for r in results for it in r.items if it.family == fam], cfg.families[fam], cfg.seed, fam)
        shards[fam] = write_shard(items, _inside(out, "temporal", f"{fam}.jsonl"))
        counts[fam] = len(items)
    shards["workflows"] = write_jsonl([w for r in results for w in r.workflows],
                                      _inside(out, "temporal", "workflows.jsonl"))
    shards["tool_plans"] = write_jsonl([t for r in results for t in r.tool_plans],
                                       _inside(out, "temporal", "tool_plans.jsonl"))
    shards["episodes"] = write_jsonl([e.to_dict() for r in results for e in r.episodes],
                                     _inside(out, "temporal", "episodes.jsonl"))
    _manifest(_inside(out, "temporal", "manifest.json"), "forge-temporal", cfg.snapshot(), shards,
              {"counts": counts, "stats": stats,
               "environments": sorted({t.environment for t in tpls}),
               "ota_replay_rate": (stats["ota_replay_success"] / stats["episodes"]) if stats.get("episodes") else None})
    for fam in fams:
        click.echo(f"{fam:<12} {counts[fam]:>7}")
    for k in ("scenarios", "workflows_valid", "toolplan_replay_success", "episodes", "ota_replay_success"):
        click.echo(f"{k:<24} {stats.get(k, 0):>7}")


# --- simulate -------------------------------------------------------------------------------


class EndpointPolicy:
    """Asks a chat endpoint for the next action given the task, last action and its feedback."""

    def __init__(self, endpoint: EndpointConfig, thinking: bool = True, client=None):
        self.endpoint = endpoint
        self.thinking = thinking
        self.client = client

    def prompt(self, ctx: PolicyContext) -> PromptSpec:
        goal = ctx.scenario.goal_text.rstrip(".")
        if ctx.steps:
            last = ctx.steps[-1]
            fb = "success" if last.feedback.status == "success" else f"failure ({last.feedback.reason})"
            text = (f'The task is "{goal}." After you have finished {last.action_text}, you can see <image>, '
                    f"and the feedback of final action is {fb}. What is your next action?")
        else:
            text = f'The task is "{goal}." You can see <image>. What is your next action?'
        text += f"\nYou observe: {ctx.observation}"
        frame = f"{ctx.scenario.scene.scene_id}/frame_{len(ctx.steps):03d}.jpg"
        return PromptSpec("closeloop", "think-v1" if self.thinking else "answer-v1", text, (frame,), self.thinking)

    def __call__(self, ctx: PolicyContext):
        raw = query(self.endpoint, self.prompt(ctx), self.client)
        res = parse_answer(raw, "action")
        return res.payload if res.ok else raw


@main.command("simulate")
@click.option("--template", "template_id", required=True, help="Scenario template id.")
@click.option("--instance-seed", type=int, default=0, show_default=True, help="Seed of the scenario instance.")
@click.option("--policy", type=click.Choice(["planner", "scripted", "endpoint"]), default="planner",
              show_default=True, help="planner: the built-in optimal plan; scripted: --actions file; "
                                      "endpoint: query --endpoint-url each step.")
@click.option("--actions", "actions_file", type=click.Path(dir_okay=False, exists=True), default=None,
              help="Scripted policy file, one action per line.")
@click.option("--endpoint-url", default=None, help="Chat-completion base URL for the endpoint policy.")
@click.option("--token-env", default="STFORGE_API_TOKEN", show_default=True,
              help="Environment variable holding the endpoint bearer token.")
@click.option("--timeout", type=float, default=60.0, show_default=True)
@click.option("--retries", type=click.IntRange(0), default=2, show_default=True)
@click.option("--p", "failure_rate", type=click.FloatRange(0, 1), default=0.0, show_default=True)
@click.option("--max-steps", type=click.IntRange(1), default=50, show_default=True)
@click.option("--templates", type=click.Path(dir_okay=False), default=None, help="Scenario template YAML.")
@click.pass_obj
def simulate(obj: Ctx, template_id, instance_seed, policy, actions_file, endpoint_url, token_env, timeout, retries,
             failure_rate, max_steps, templates):
    """Run one closed-loop episode and write it as an episode shard."""
    sec = obj.sec("simulate")
    seed = obj.the_seed(sec)
    out = obj.out_root(sec)
    _setup_logging(obj.log_level, out, "simulate")
    try:
        tpls = {t.template_id: t for t in load_templates(templates or sec.get("templates"))}
    except (ScenarioError, OSError) as exc:
        _fail(str(exc))
    if template_id not in tpls:
        raise click.UsageError(f"unknown scenario template {template_id!r}")
    scenario = instantiate_scenario(tpls[template_id], instance_seed)
    agent = choose_agent(scenario).name
    ep_id = f"{scenario.scene.scene_id}:sim{seed}"
    try:
        if policy == "planner":
            ep = synthesize_ota(scenario, seed=seed, p=failure_rate, max_steps=max_steps, episode_id=ep_id)
        else:
            if policy == "scripted":
                if actions_file is None:
                    raise click.UsageError("--policy scripted needs --actions")
                lines = [l.strip() for l in Path(actions_file).read_text(encoding="utf-8").splitlines() if l.strip()]
                try:
                    pol: Any = ScriptedPolicy([parse_action(l, scenario.scene, agent) for l in lines])
                except ActionError as exc:
                    _fail(f"{actions_file}: {exc}")
            else:
                if endpoint_url is None:
                    raise click.UsageError("--policy endpoint needs --endpoint-url")
                pol = EndpointPolicy(EndpointConfig(endpoint_url, token_env=token_env, timeout=timeout,
                                                    max_retries=retries))
            ep = simulate_episode(scenario, _as_agent(pol, agent), p=failure_rate, max_steps=max_steps, seed=seed,
                                  episode_id=ep_id)
    except EndpointError as exc:
        _fail(f"endpoint error: {exc}")
    path = _inside(out, "episodes", f"{template_id}_{instance_seed}_{seed}.jsonl")
    manifest = write_jsonl([ep.to_dict()], path)
    click.echo(f"outcome {ep.outcome} steps {len(ep.steps)} sha256 {manifest['sha256']}")


def _as_agent(policy, agent: str):
    """Run text or robot-less actions as the scenario's chosen executor."""
    def wrapped(ctx: PolicyContext):
        out = policy(ctx)
        if isinstance(out, str):
            try:
                return parse_action(out, ctx.scenario.scene, agent)
            except ActionError:
                return out
        return out if out.robot is not None else out.with_robot(agent)
    return wrapped


# --- evaluate / score / report --------------------------------------------------------------


def _eval_options(f):
    opts = [
        click.option("--items", type=click.Path(dir_okay=False), default=None, help="QA item shard (JSONL)."),
        click.option("--predictions", type=click.Path(dir_okay=False), default=None,
                     help="Prediction JSONL of {item_id, raw_text} or {item_id, payload}."),
        click.option("--benchmark", default=None, help="Benchmark id used for report file names."),
        click.option("--coord-mode", type=click.Choice(["absolute", "normalized", "normalized_1000"]), default=None,
                     help="Coordinate convention of predicted points and boxes (default absolute)."),
        click.option("--dfd-normalize/--no-dfd-normalize", default=None,
                     help="Divide trajectory coordinates by image size before the Fréchet distance."),
        click.option("--threshold", type=float, default=None, help="CI threshold on the overall score."),
        click.option("--ci", is_flag=True, default=False, help="Exit 1 when the threshold is not met."),
    ]
    for o in reversed(opts):
        f = o(f)
    return f


def _evaluate(obj: Ctx, sec: Dict[str, Any], items, predictions, benchmark, coord_mode, dfd_normalize, threshold,
              ci, endpoint: Optional[Dict[str, Any]], thinking: Optional[bool]) -> None:
    try:
        cfg = EvalConfig(
            benchmark=obj.pick(sec, "benchmark", benchmark, "benchmark"),
            items=obj.pick(sec, "items", items, None) or _fail_usage("--items is required"),
            predictions=None if endpoint else obj.pick(sec, "predictions", predictions, None),
            endpoint=endpoint,
            coord_mode=obj.pick(sec, "coord_mode", coord_mode, "absolute"),
            dfd_normalize=bool(obj.pick(sec, "dfd_normalize", dfd_normalize, True)),
            thinking=bool(obj.pick(sec, "thinking", thinking, True)),
            threshold=obj.pick(sec, "threshold", threshold, None),
            output=str(obj.out_root(sec)),
        )
    except ConfigError as exc:
        raise click.UsageError(str(exc)) from None
    out = Path(cfg.output)
    _setup_logging(obj.log_level, out, "evaluate")
    try:
        items_ = read_shard(cfg.items)
    except (SceneValidationError, OSError, ValueError) as exc:
        _fail(f"{cfg.items}: {exc}")
    ep = None
    if cfg.endpoint is not None:
        try:
            ep = EndpointConfig.from_dict({**cfg.endpoint, "max_in_flight": cfg.endpoint.get("max_in_flight",
                                                                                            obj.workers)})
        except (TypeError, ValueError) as exc:
            raise click.UsageError(f"endpoint config: {exc}") from None
    try:
        report = run_benchmark(items_, endpoint=ep, predictions=cfg.predictions, benchmark=cfg.benchmark,
                               thinking=cfg.thinking, coord_mode=cfg.coord_mode, dfd_normalize=cfg.dfd_normalize,
                               audit_path=_inside(out, "reports", f"{cfg.benchmark}.audit.jsonl"))
    except (BenchmarkError, ReportError, EndpointError, ValueError) as exc:
        _fail(str(exc))
    report.write_jsonl(_inside(out, "reports", f"{cfg.benchmark}.jsonl"))
    table = report.table()
    _inside(out, "reports", f"{cfg.benchmark}.txt").write_text(table + "\n", encoding="utf-8")
    click.echo(table)
    _check(report, cfg.threshold, ci)


def _fail_usage(msg: str):
    raise click.UsageError(msg)


def _check(report: EvalReport, threshold: Optional[float], ci: bool) -> None:
    failures = report.threshold_failures(threshold)
    for f in failures:
        click.echo(f"THRESHOLD {f}", err=True)
    if failures and ci:
        sys.exit(1)


@main.command("evaluate")
@_eval_options
@click.option("--endpoint-url", default=None, help="Chat-completion base URL (online mode).")
@click.option("--model", default=None, help="Model name sent to the endpoint.")
@click.option("--token-env", default=None, help="Environment variable holding the bearer token.")
@click.option("--timeout", type=float, default=None, help="Request timeout in seconds.")
@click.option("--retries", type=click.IntRange(0), default=None, help="Retries on transient failure.")
@click.option("--in-flight", type=click.IntRange(1), default=None, help="Max concurrent requests.")
@click.option("--thinking/--no-thinking", default=None, help="Request the think-then-answer grammar.")
@click.pass_obj
def evaluate(obj: Ctx, items, predictions, benchmark, coord_mode, dfd_normalize, threshold, ci, endpoint_url, model,
             token_env, timeout, retries, in_flight, thinking):
    """Score a benchmark from a prediction file or a live endpoint and render the report."""
    sec = obj.sec("evaluate")
    endpoint = dict(sec.get("endpoint") or {})
    for key, val in (("base_url", endpoint_url), ("model", model), ("token_env", token_env), ("timeout", timeout),
                     ("max_retries", retries), ("max_in_flight", in_flight)):
        if val is not None:
            endpoint[key] = val
    if predictions is not None and endpoint_url is None:
        endpoint = {}
    _evaluate(obj, sec, items, predictions, benchmark, coord_mode, dfd_normalize, threshold, ci,
              endpoint or None, thinking)


@main.command("score")
@_eval_options
@click.pass_obj
def score(obj: Ctx, items, predictions, benchmark, coord_mode, dfd_normalize, threshold, ci):
    """Offline scoring of a prediction file; never touches the network."""
    sec = obj.sec("evaluate")
    _evaluate(obj, sec, items, predictions, benchmark, coord_mode, dfd_normalize, threshold, ci, None, None)


@main.command("report")
@click.argument("records", type=click.Path(dir_okay=False, exists=True))
@click.option("--threshold", type=float, default=None, help="CI threshold on the overall score.")
@click.option("--ci", is_flag=True, default=False, help="Exit 1 when the threshold is not met.")
@click.option("--scale", type=float, default=1.0, show_default=True, help="Multiply means, e.g. 100 for percent.")
@click.pass_obj
def report_cmd(obj: Ctx, records, threshold, ci, scale):
    """Re-render a saved report JSONL as a fixed-width table."""
    try:
        rep = EvalReport.from_jsonl(records)
    except (ReportError, KeyError, ValueError) as exc:
        _fail(f"{records}: {exc}")
    click.echo(rep.table(scale=scale))
    _check(rep, threshold, ci)


def run(argv: Optional[Sequence[str]] = None) -> int:
    try:
        main.main(args=list(argv) if argv is not None else None, standalone_mode=False)
    except click.ClickException as exc:
        exc.show()
        return exc.exit_code
    except SystemExit as exc:
        return int(exc.code or 0)
    return 0
