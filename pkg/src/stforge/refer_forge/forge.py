"""Synthesis of the spatial QA families from scene graphs."""

from __future__ import annotations

import logging
import math
import random
import re
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..geometry3d.camera import project
from ..geometry3d.occupancy import (
    DIRECTIONS,
    NoFreeCellError,
    OccupancyGrid,
    build_occupancy,
    candidate_cells,
    sample_placement,
)
from ..geometry3d.relations import RelationNotApplicable, RelationQuery, evaluate_relation
from ..model_client.grammar import render_payload
from ..scene_core.cleaning import CleaningLogEntry, clean_point_annotations, resample_indices, round_half_up
from ..scene_core.io import derive_seed
from ..scene_core.types import ObjectNode, QAItem, SceneGraph
from .captions import DEFAULT_STRATEGIES, CaptionTier, plural, unique_caption, with_article
from .resolver import resolves_uniquely
from .templates import Template, TemplatePack, default_pack

log = logging.getLogger(__name__)

MAX_POINTS = 10
PLACEMENT_OFFSETS = (0.0, 0.05, 0.10, 0.15, 0.20, 0.30)
RELATION_PHRASE = {
    "left": "to the left of",
    "right": "to the right of",
    "front": "in front of",
    "behind": "behind",
}
LETTERS = "ABCDEFGHIJ"


@dataclass
class ForgeLog:
    """Skipped inputs and cleaning actions collected while forging one scene."""

    entries: List[CleaningLogEntry] = field(default_factory=list)

    def add(self, source: str, rule: str, action: str) -> None:
        self.entries.append(CleaningLogEntry(source, rule, action))


def format_offset(meters: float) -> str:
    """0.10 -> '10cm'."""
    return f"{int(round(meters * 100))}cm"


def parse_offset(text: str) -> float:
    m = re.fullmatch(r"\s*(\d+(?:\.\d+)?)\s*(cm|m)\s*", text)
    if m is None:
        raise ValueError(f"cannot parse metric offset {text!r}")
    v = float(m.group(1))
    return round(v / 100.0, 6) if m.group(2) == "cm" else v


def _pick(templates: Sequence[Template], seed: int) -> Template:
    return templates[seed % len(templates)]


def _pixel(x: float, y: float, w: int, h: int) -> List[int]:
    return [min(max(round_half_up(x), 0), w - 1), min(max(round_half_up(y), 0), h - 1)]


def _inside_box_pixel(node: ObjectNode, w: int, h: int) -> List[int]:
    """Rounded anchor point, nudged so it stays strictly inside a box region."""
    px, py = _pixel(*node.anchor_point(), w, h)
    if node.mask is not None:
        return [px, py]
    b = node.box
    if px <= b.x1:
        px = int(math.floor(b.x1)) + 1
    if px >= b.x2:
        px = int(math.ceil(b.x2)) - 1
    if py <= b.y1:
        py = int(math.floor(b.y1)) + 1
    if py >= b.y2:
        py = int(math.ceil(b.y2)) - 1
    return [min(max(px, 0), w - 1), min(max(py, 0), h - 1)]


def node_region(node: ObjectNode) -> Dict[str, Any]:
    if node.mask is not None:
        return {"type": "mask", "width": node.mask.width, "height": node.mask.height,
                "counts": list(node.mask.counts)}
    return {"type": "box", "box": node.box.to_list()}


def _int_box(box) -> List[int]:
    return [int(math.floor(box.x1)), int(math.floor(box.y1)), int(math.ceil(box.x2)), int(math.ceil(box.y2))]


def _item(scene: SceneGraph, family: str, key: str, prompt: str, kind: str, answer: Any,
          template: Optional[str], meta: Dict[str, Any]) -> QAItem:
    meta = dict(meta)
    meta["answer_text"] = render_payload(kind, answer)
    return QAItem(
        item_id=f"{scene.scene_id}:{family}:{key}",
        family=family,
        prompt=prompt,
        images=(scene.image_ref,),
        target_kind=kind,
        answer=answer,
        image_size=(scene.image_width, scene.image_height),
        provenance={"scene_id": scene.scene_id, "template": template, "generator": "refer_forge"},
        meta=meta,
    ).validate()


def gen_pointing(scene: SceneGraph, templates: Optional[TemplatePack] = None, seed: int = 0,
                 max_points: int = MAX_POINTS, log_: Optional[ForgeLog] = None) -> List[QAItem]:
    """One item per category: every instance gets one point, capped at ``max_points``."""
    pack = templates or default_pack()
    tpls = pack.family("pointing")
    w, h = scene.image_width, scene.image_height
    items = []
    for cat in sorted({n.category for n in scene.nodes}):
        inst = sorted(scene.by_category(cat), key=lambda n: n.id)
        pts = [_inside_box_pixel(n, w, h) for n in inst]
        regions = [node_region(n) for n in inst]
        s = derive_seed(scene.scene_id, "pointing", cat, seed)
        if len(pts) > max_points:
            idx = resample_indices(len(pts), max_points, s)
            if log_ is not None:
                log_.add(scene.scene_id, f"resample_to_{max_points}", f"{cat}: kept {max_points} of {len(pts)}")
            pts = [pts[i] for i in idx]
        t = _pick(tpls, s)
        items.append(_item(scene, "pointing", cat, t.fill(label=plural(cat)), "points", pts,
                           t.template_id, {"category": cat, "instances": [n.id for n in inst],
                                           "region": {"type": "union", "parts": regions}}))
    return items


def gen_pointing_from_annotations(scene: SceneGraph, templates: Optional[TemplatePack] = None,
                                  seed: int = 0, max_points: int = MAX_POINTS,
                                  coord_mode: str = "absolute",
                                  log_: Optional[ForgeLog] = None) -> List[QAItem]:
    """Pointing items from raw point labels; groups above ``max_points`` are discarded and logged."""
    pack = templates or default_pack()
    tpls = pack.family("pointing")
    res = clean_point_annotations(scene.point_annotations, scene.image_width, scene.image_height,
                                  max_points=max_points, coord_mode=coord_mode, policy="discard", seed=seed)
    if log_ is not None:
        log_.entries.extend(res.log)
    items = []
    for ann in res.kept:
        s = derive_seed(scene.scene_id, "pointing_src", ann.source_id, ann.label, seed)
        t = _pick(tpls, s)
        inst = scene.by_category(ann.label)
        meta: Dict[str, Any] = {"category": ann.label, "source_id": ann.source_id}
        if inst:
            meta["region"] = {"type": "union", "parts": [node_region(n) for n in inst]}
        items.append(_item(scene, "pointing", f"src:{ann.source_id}:{ann.label}",
                           t.fill(label=plural(ann.label)), "points",
                           [list(p) for p in ann.points], t.template_id, meta))
    return items


def _captioned(scene: SceneGraph, strategies: Sequence[str],
               log_: Optional[ForgeLog]) -> List[Tuple[ObjectNode, CaptionTier]]:
    out = []
    for n in sorted(scene.nodes, key=lambda n: n.id):
        tier = unique_caption(scene, n.id, strategies)
        # forge-time self-consistency: the independent resolver must agree
        if tier is None or not resolves_uniquely(scene, tier.resolver, n.id):
            if log_ is not None:
                log_.add(scene.scene_id, "uniqueness_unattainable", f"skipped {n.id}")
            continue
        out.append((n, tier))
    return out


def _caption_meta(node: ObjectNode, tier: CaptionTier) -> Dict[str, Any]:
    return {"target": node.id, "caption": tier.text, "resolver": tier.resolver.to_dict()}


def gen_grounding(scene: SceneGraph, seed: int = 0, templates: Optional[TemplatePack] = None,
                  strategies: Sequence[str] = DEFAULT_STRATEGIES,
                  log_: Optional[ForgeLog] = None) -> List[QAItem]:
    tpls = (templates or default_pack()).family("grounding")
    items = []
    for node, tier in _captioned(scene, strategies, log_):
        t = _pick(tpls, derive_seed(scene.scene_id, "grounding", node.id, seed))
        items.append(_item(scene, "grounding", node.id, t.fill(caption=with_article(tier.text)), "box",
                           _int_box(node.box), t.template_id, _caption_meta(node, tier)))
    return items


def gen_referring(scene: SceneGraph, seed: int = 0, templates: Optional[TemplatePack] = None,
                  strategies: Sequence[str] = DEFAULT_STRATEGIES,
                  log_: Optional[ForgeLog] = None) -> List[QAItem]:
    """Single-target pointing at a uniquely captioned object."""
    tpls = (templates or default_pack()).family("referring")
    w, h = scene.image_width, scene.image_height
    items = []
    for node, tier in _captioned(scene, strategies, log_):
        t = _pick(tpls, derive_seed(scene.scene_id, "referring", node.id, seed))
        meta = _caption_meta(node, tier)
        meta["region"] = node_region(node)
        items.append(_item(scene, "referring", node.id, t.fill(caption=with_article(tier.text)), "points",
                           [_inside_box_pixel(node, w, h)], t.template_id, meta))
    return items


def _category_tokens(category: str) -> List[str]:
    words = category.lower().replace("_", " ").split()
    out = set(words)
    for wd in words:
        out.update({wd + "s", wd + "es"})
        if wd.endswith("y"):
            out.add(wd[:-1] + "ies")
        if wd.endswith("f"):
            out.add(wd[:-1] + "ves")
        if wd.endswith("fe"):
            out.add(wd[:-2] + "ves")
    out.add(category.lower().replace("_", ""))
    out.update(plural(category).lower().split())
    return sorted(out)


def names_category(prompt: str, category: str) -> bool:
    """True if any token of ``prompt`` is the category word (or a simple plural of it)."""
    toks = set(re.findall(r"[a-z]+", prompt.lower()))
    return any(t in toks for t in _category_tokens(category))


def gen_affordance(scene: SceneGraph, seed: int = 0, templates: Optional[TemplatePack] = None,
                   strategies: Sequence[str] = DEFAULT_STRATEGIES,
                   log_: Optional[ForgeLog] = None) -> List[QAItem]:
    pack = templates or default_pack()
    part_t, obj_t = pack.family("affordance_part"), pack.family("affordance_object")
    captions = {n.id: tier for n, tier in _captioned(scene, strategies, None)}
    items = []
    for node in sorted(scene.nodes, key=lambda n: n.id):
        if not node.parts and not node.functions:
            if log_ is not None:
                log_.add(scene.scene_id, "no_functional_annotation", f"skipped {node.id}")
            continue
        for part in node.parts:
            if not part.affordance or node.id not in captions:
                continue
            t = _pick(part_t, derive_seed(scene.scene_id, "affordance", node.id, part.name, seed))
            prompt = t.fill(caption=with_article(captions[node.id].text), affordance=part.affordance)
            items.append(_item(scene, "affordance", f"{node.id}:{part.name}", prompt, "box",
                               _int_box(part.box), t.template_id,
                               {"level": "part", "target": node.id, "part": part.name,
                                "affordance": part.affordance}))
        for fn in node.functions:
            holders = [n.id for n in scene.nodes if fn in n.functions]
            if holders != [node.id]:
                if log_ is not None:
                    log_.add(scene.scene_id, "ambiguous_function", f"{fn!r} held by {holders}")
                continue
            t = _pick(obj_t, derive_seed(scene.scene_id, "affordance", node.id, fn, seed))
            prompt = t.fill(function=fn)
            if names_category(prompt, node.category):
                if log_ is not None:
                    log_.add(scene.scene_id, "names_object", f"skipped function of {node.id}")
                continue
            items.append(_item(scene, "affordance", f"{node.id}:fn", prompt, "box",
                               _int_box(node.box), t.template_id,
                               {"level": "object", "target": node.id, "function": fn}))
    return items


def _cell_quad(grid: OccupancyGrid, r: int, c: int, y: float, k) -> List[List[float]]:
    x0, x1, z0, z1 = grid.cell_bounds(r, c)
    quad = []
    for x, z in ((x0, z0), (x1, z0), (x1, z1), (x0, z1)):
        world = grid.to_camera_frame(np.array([x, y, z]))
        u, v = project(world, k)
        quad.append([round(float(u), 4), round(float(v), 4)])
    return quad


def gen_placement(scene: SceneGraph, grid: OccupancyGrid, seed: int = 0,
                  templates: Optional[TemplatePack] = None, max_points: int = MAX_POINTS,
                  strategies: Sequence[str] = DEFAULT_STRATEGIES,
                  offsets: Sequence[float] = PLACEMENT_OFFSETS,
                  on_error: str = "skip", log_: Optional[ForgeLog] = None) -> List[QAItem]:
    """Free-space points at a metric offset from a uniquely captioned anchor.

    Ground truth holds the projected centers of sampled free cells (two
    decimals, so each point stays strictly inside its cell's image quad).
    With ``on_error="raise"`` a missing free cell propagates as
    :class:`NoFreeCellError`; the default skips the anchor and logs it.
    """
    k = scene.intrinsics
    if k is None:
        raise ValueError(f"scene {scene.scene_id} has no intrinsics; placement needs projection")
    pack = templates or default_pack()
    w, h = scene.image_width, scene.image_height
    items = []
    for node, tier in _captioned(scene, strategies, log_):
        if node.id not in grid.footprints:
            continue
        s = derive_seed(scene.scene_id, "placement", node.id, seed)
        rng = random.Random(s)
        direction = rng.choice(DIRECTIONS)
        offset = rng.choice(list(offsets))
        try:
            picks = sample_placement(grid, node.id, direction, offset, max_points, s, intrinsics=k)
        except NoFreeCellError as exc:
            if on_error == "raise":
                raise
            if log_ is not None:
                log_.add(scene.scene_id, "no_free_cell", str(exc))
            continue
        y = grid.footprints[node.id].bottom_y
        quads = []
        for r, c in candidate_cells(grid, node.id, direction, offset):
            cx, cz = grid.cell_center(r, c)
            world = grid.to_camera_frame(np.array([cx, y, cz]))
            if world[2] <= 0:
                continue
            u, v = project(world, k)
            if 0 <= u <= w - 1 and 0 <= v <= h - 1:
                quads.append({"type": "polygon", "points": _cell_quad(grid, r, c, y, k)})
        pts = [[round(p.pixel[0], 2), round(p.pixel[1], 2)] for p in picks]
        tpls = pack.for_concept("placement", f"vacant_{direction}") or pack.family("placement")
        t = _pick(tpls, s)
        off_txt = f"{format_offset(offset)} " if offset > 0 else ""
        prompt = t.fill(offset=off_txt, relation=RELATION_PHRASE[direction], anchor=with_article(tier.text))
        items.append(_item(scene, "placement", node.id, prompt, "points", pts, t.template_id, {
            "anchor": node.id,
            "caption": tier.text,
            "direction": direction,
            "offset_m": offset,
            "cell_size": grid.cell_size,
            "cells": [list(p.cell) for p in picks],
            "world": [[round(v, 6) for v in p.world] for p in picks],
            "region": {"type": "union", "parts": quads},
        }))
    return items


def _name(caps: Dict[str, CaptionTier], nid: str) -> str:
    return with_article(caps[nid].text)


def _mc_options(rng: random.Random, correct: str, distractors: Sequence[str], n_options: int):
    opts = [correct] + [d for d in distractors if d != correct][: n_options - 1]
    if len(opts) < 2:
        return None
    order = list(range(len(opts)))
    rng.shuffle(order)
    shuffled = [opts[i] for i in order]
    return shuffled, order.index(0)


def _mc_prompt(stem: str, options: Sequence[str]) -> str:
    lines = [stem, "Options:"] + [f"({LETTERS[i]}) {o}" for i, o in enumerate(options)]
    return "\n".join(lines)


MC_CONCEPTS = ("nearest", "farthest", "distance", "left_right", "tallest", "largest", "closer")


def gen_spatial_mc(scene: SceneGraph, seed: int = 0, n_options: int = 4,
                   templates: Optional[TemplatePack] = None, per_scene: int = 3,
                   strategies: Sequence[str] = DEFAULT_STRATEGIES,
                   log_: Optional[ForgeLog] = None) -> List[QAItem]:
    """Multiple-choice questions over the relation engine.

    Distractors are one step away from the correct answer in the relation's
    own ordering (second-nearest for nearest, scaled values for distances).
    """
    if not 2 <= n_options <= len(LETTERS):
        raise ValueError(f"n_options must be in [2, {len(LETTERS)}]")
    pack = templates or default_pack()
    caps = {n.id: t for n, t in _captioned(scene, strategies, None)}
    named = sorted(nid for nid in caps if scene.node(nid).box3d is not None)
    base = derive_seed(scene.scene_id, "spatial_mc", seed)
    rng = random.Random(base)
    concepts_ = list(MC_CONCEPTS)
    rng.shuffle(concepts_)
    items: List[QAItem] = []
    for concept in concepts_:
        if len(items) >= per_scene:
            break
        crng = random.Random(derive_seed(base, concept))
        built = _build_mc(scene, concept, named, caps, crng, n_options, pack)
        if built is None:
            if log_ is not None:
                log_.add(scene.scene_id, "mc_not_applicable", concept)
            continue
        stem, options, correct_idx, t, meta = built
        meta.update({"concept": concept, "options": options, "correct_index": correct_idx})
        items.append(_item(scene, "spatial_mc", concept, _mc_prompt(stem, options), "option",
                           LETTERS[correct_idx], t.template_id, meta))
    return items


def _build_mc(scene, concept, named, caps, rng, n_options, pack):
    if len(named) < 2:
        return None
    if concept in ("nearest", "farthest"):
        anchor = rng.choice(named)
        others = [i for i in named if i != anchor]
        if len(others) < 2:
            return None
        r = evaluate_relation(scene, RelationQuery(concept, anchor, objects=tuple(others)))
        if r.tied:
            return None
        a = scene.node(anchor)
        dist = {i: math.dist(a.box3d.center, scene.node(i).box3d.center) for i in others}
        ranked = sorted(others, key=lambda i: (dist[i], i), reverse=(concept == "farthest"))
        ranked = [i for i in ranked if i != r.value]
        picked = _mc_options(rng, _name(caps, r.value), [_name(caps, i) for i in ranked], n_options)
        if picked is None:
            return None
        t = _pick(pack.for_concept("spatial_mc", concept), rng.randrange(1 << 30))
        return (t.fill(anchor=_name(caps, anchor)), picked[0], picked[1], t,
                {"anchor": anchor, "answer_id": r.value})
    if concept == "distance":
        s_id, o_id = rng.sample(named, 2)
        r = evaluate_relation(scene, RelationQuery("distance", s_id, o_id))
        val = float(r.value)
        fmt = lambda v: f"{v:.2f} m"  # noqa: E731
        distractors = [fmt(val * f) for f in (0.5, 1.5, 2.0, 2.5, 3.0)]
        picked = _mc_options(rng, fmt(val), list(dict.fromkeys(distractors)), n_options)
        if picked is None:
            return None
        t = _pick(pack.for_concept("spatial_mc", "distance"), rng.randrange(1 << 30))
        return (t.fill(subject=_name(caps, s_id), anchor=_name(caps, o_id)), picked[0], picked[1], t,
                {"subject": s_id, "anchor": o_id, "value": val, "unit": r.unit})
    if concept == "left_right":
        s_id, o_id = rng.sample(named, 2)
        left = evaluate_relation(scene, RelationQuery("left_of", s_id, o_id)).value
        right = evaluate_relation(scene, RelationQuery("right_of", s_id, o_id)).value
        if left == right:
            return None
        picked = _mc_options(rng, "left" if left else "right", ["right" if left else "left"], 2)
        t = _pick(pack.for_concept("spatial_mc", "left_of"), rng.randrange(1 << 30))
        return (t.fill(subject=_name(caps, s_id), anchor=_name(caps, o_id)), picked[0], picked[1], t,
                {"subject": s_id, "anchor": o_id, "value": "left" if left else "right"})
    if concept in ("tallest", "largest"):
        pool = rng.sample(named, min(n_options, len(named)))
        try:
            r = evaluate_relation(scene, RelationQuery(concept, objects=tuple(pool)))
        except RelationNotApplicable:
            return None
        if r.tied:
            return None
        others = [_name(caps, i) for i in sorted(pool) if i != r.value]
        picked = _mc_options(rng, _name(caps, r.value), others, n_options)
        if picked is None:
            return None
        t = _pick(pack.for_concept("spatial_mc", concept), rng.randrange(1 << 30))
        return (t.fill(), picked[0], picked[1], t, {"candidates": sorted(pool), "answer_id": r.value})
    if concept == "closer":
        s_id, o_id = rng.sample(named, 2)
        zs, zo = scene.node(s_id).box3d.center[2], scene.node(o_id).box3d.center[2]
        if abs(zs - zo) <= 1e-9:
            return None
        win = s_id if evaluate_relation(scene, RelationQuery("in_front_of", s_id, o_id)).value else o_id
        lose = o_id if win == s_id else s_id
        picked = _mc_options(rng, _name(caps, win), [_name(caps, lose)], 2)
        t = _pick(pack.for_concept("spatial_mc", "in_front_of"), rng.randrange(1 << 30))
        return (t.fill(subject=_name(caps, s_id), anchor=_name(caps, o_id)), picked[0], picked[1], t,
                {"subject": s_id, "anchor": o_id, "answer_id": win})
    raise ValueError(f"unknown spatial MC concept {concept!r}")


SPATIAL_FAMILIES = ("pointing", "grounding", "affordance", "referring", "placement", "spatial_mc")


def forge_scene(scene: SceneGraph, families: Sequence[str] = SPATIAL_FAMILIES, seed: int = 0,
                templates: Optional[TemplatePack] = None, grid: Optional[OccupancyGrid] = None,
                cell_size: float = 0.05, n_options: int = 4,
                log_: Optional[ForgeLog] = None) -> Dict[str, List[QAItem]]:
    """Run every requested generator on one scene; returns items keyed by family."""
    unknown = [f for f in families if f not in SPATIAL_FAMILIES]
    if unknown:
        raise ValueError(f"unknown spatial family: {', '.join(unknown)}")
    out: Dict[str, List[QAItem]] = {}
    for fam in families:
        if fam == "pointing":
            out[fam] = gen_pointing(scene, templates, seed, log_=log_)
            if scene.point_annotations:
                out[fam] += gen_pointing_from_annotations(scene, templates, seed, log_=log_)
        elif fam == "grounding":
            out[fam] = gen_grounding(scene, seed, templates, log_=log_)
        elif fam == "affordance":
            out[fam] = gen_affordance(scene, seed, templates, log_=log_)
        elif fam == "referring":
            out[fam] = gen_referring(scene, seed, templates, log_=log_)
        elif fam == "placement":
            if scene.intrinsics is None or not any(n.box3d is not None for n in scene.nodes):
                out[fam] = []
                continue
            if grid is None:
                grid = build_occupancy(scene, cell_size)
            out[fam] = gen_placement(scene, grid, seed, templates, log_=log_)
        elif fam == "spatial_mc":
            out[fam] = gen_spatial_mc(scene, seed, n_options, templates, log_=log_)
    return out
