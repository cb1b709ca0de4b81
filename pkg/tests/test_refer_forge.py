import math
import re

import pytest
from hypothesis import given, settings, strategies as st

from stforge.geometry3d import FREE, build_occupancy, evaluate_relation, project, RelationQuery
from stforge.geometry3d.occupancy import NoFreeCellError
from stforge.model_client.grammar import parse_answer
from stforge.refer_forge import (
    ResolverSpec,
    TemplateError,
    TemplatePack,
    UniquenessUnattainable,
    caption_hierarchy,
    default_pack,
    forge_scene,
    format_offset,
    gen_affordance,
    gen_grounding,
    gen_placement,
    gen_pointing,
    gen_referring,
    gen_spatial_mc,
    names_category,
    parse_offset,
    resolve,
)
from stforge.scene_core import Box2D, Box3D, ObjectNode, PartAnnotation, SceneGraph
from stforge.scene_core.synthetic import object_on_floor, random_scene


def _scene(*nodes, w=640, h=480, **kw):
    return SceneGraph("s", w, h, tuple(nodes), **kw)


def _node(i, cat, box, **kw):
    return ObjectNode(i, cat, Box2D(*box), **kw)


def three_cups():
    return _scene(
        _node("c1", "cup", (0, 100, 20, 130)),
        _node("c2", "cup", (40, 100, 60, 130)),
        _node("c3", "cup", (80, 100, 100, 130)),
    )


# --- templates ---------------------------------------------------------------

def test_pack_has_28_pointing_variants_with_label_slot():
    pack = default_pack()
    tpls = pack.family("pointing")
    assert len(tpls) >= 28
    assert all(t.slots == ("label",) for t in tpls)
    surfaces = {t.surface for t in tpls}
    assert "Point out all instances of {label} in the image." in surfaces


def test_pack_rejects_uncataloged_tag_and_short_pointing():
    with pytest.raises(TemplateError, match="not in catalog"):
        TemplatePack.parse("version: 1\n[placement]\np.0 [vacant_up]: x {anchor}\n")
    with pytest.raises(TemplateError, match="at least 28"):
        TemplatePack.parse("version: 1\n[pointing]\np.0: find {label}\n")
    with pytest.raises(TemplateError, match="version"):
        TemplatePack.parse("version: 2\n")


# --- captions ----------------------------------------------------------------

def test_single_instance_unique_equals_coarse():
    scene = _scene(_node("c", "cup", (10, 10, 30, 30)))
    tiers = caption_hierarchy(scene, "c")
    assert tiers[0].level == "coarse" and tiers[-1].level == "unique"
    assert tiers[-1].text == tiers[0].text == "cup"


def test_third_cup_from_the_left():
    tiers = caption_hierarchy(three_cups(), "c3")
    unique = tiers[-1]
    assert unique.text == "the third cup from the left"
    assert resolve(three_cups(), unique.resolver) == ["c3"]


def test_identical_twins_are_unattainable():
    scene = _scene(_node("a", "box", (10, 10, 50, 50)), _node("b", "box", (10, 10, 50, 50)))
    with pytest.raises(UniquenessUnattainable, match="uniqueness unattainable"):
        caption_hierarchy(scene, "a")
    assert gen_grounding(scene) == []
    assert gen_referring(scene) == []


def test_attributed_tier_uses_discriminative_attribute():
    scene = _scene(
        _node("a", "mug", (10, 10, 50, 50), attributes=("red",)),
        _node("b", "mug", (10, 10, 50, 50), attributes=("blue",)),
    )
    tiers = caption_hierarchy(scene, "b")
    assert [t.level for t in tiers] == ["coarse", "attributed", "unique"]
    assert tiers[1].text == "blue mug"
    assert resolve(scene, tiers[-1].resolver) == ["b"]


def test_resolver_returns_whole_tie_group():
    scene = _scene(_node("a", "cup", (0, 0, 10, 10)), _node("b", "cup", (0, 20, 10, 30)))
    assert resolve(scene, ResolverSpec("cup", (("ordinal", "left", 1),))) == ["a", "b"]


# --- pointing ----------------------------------------------------------------

def test_pointing_box_centers():
    scene = _scene(_node("m1", "mug", (80, 80, 120, 120)), _node("m2", "mug", (180, 130, 220, 170)))
    (item,) = gen_pointing(scene, seed=0)
    assert item.answer == [[100, 100], [200, 150]]
    assert item.target_kind == "points"
    assert item.meta["answer_text"] == "[(100, 100), (200, 150)]"
    assert "mugs" in item.prompt


def test_pointing_resamples_14_books_deterministically():
    books = [_node(f"b{i:02d}", "book", (20 * i, 10, 20 * i + 15, 40)) for i in range(14)]
    scene = _scene(*books)
    a = gen_pointing(scene, seed=3)[0]
    b = gen_pointing(scene, seed=3)[0]
    assert len(a.answer) == 10 and a.answer == b.answer
    all_pts = [[20 * i + 8, 25] for i in range(14)]
    assert all(p in all_pts for p in a.answer)


def test_rendered_pointing_answer_parses():
    r = parse_answer("<answer>[(296, 282), (321, 256)]</answer>", "points")
    assert r.ok and r.payload == [[296, 282], [321, 256]]


def test_pointing_from_annotations_discards_12_points():
    from stforge.refer_forge import ForgeLog, gen_pointing_from_annotations
    from stforge.scene_core import PointAnnotation

    pts12 = tuple((10.0 + i, 20.0) for i in range(12))
    scene = _scene(
        _node("b1", "book", (0, 0, 100, 100)),
        point_annotations=(PointAnnotation("srcA", "book", pts12),
                           PointAnnotation("srcB", "book", ((5.0, 5.0),))),
    )
    lg = ForgeLog()
    items = gen_pointing_from_annotations(scene, log_=lg)
    assert [it.meta["source_id"] for it in items] == ["srcB"]
    assert any(e.source_id == "srcA" and e.rule == "more_than_10_points" for e in lg.entries)


# --- grounding / affordance / referring ---------------------------------------

def test_grounding_sole_laptop():
    scene = _scene(_node("l", "laptop", (10, 20, 200, 180)))
    (item,) = gen_grounding(scene)
    assert item.answer == [10, 20, 200, 180]
    assert "the laptop" in item.prompt


def test_affordance_part_level_handbag_handle():
    bag = _node("h", "handbag", (30, 30, 110, 120),
                parts=(PartAnnotation("handle", Box2D(50, 40, 90, 60), "grasped to carry it"),))
    (item,) = gen_affordance(_scene(bag))
    assert item.answer == [50, 40, 90, 60]
    assert "grasped to carry it" in item.prompt
    assert item.meta["level"] == "part"


def test_affordance_whole_object_never_names_category():
    mouse = _node("m", "mouse", (300, 300, 330, 340),
                  functions=("be moved to control the cursor on a screen",))
    (item,) = gen_affordance(_scene(mouse))
    assert item.meta["level"] == "object"
    assert "mouse" not in re.findall(r"[a-z]+", item.prompt.lower())
    assert item.answer == [300, 300, 330, 340]


def test_affordance_skips_prompt_that_names_object():
    lamp = _node("l", "lamp", (0, 0, 50, 50), functions=("switch the lamp on",))
    assert gen_affordance(_scene(lamp)) == []
    assert names_category("Which lamps are on?", "lamp")
    assert names_category("Grab the knives", "knife")
    assert not names_category("Which cupboard?", "cup")


def test_affordance_skips_plain_objects():
    assert gen_affordance(_scene(_node("b", "box", (0, 0, 10, 10)))) == []


def _nearest_scene(tie=False):
    sink = ObjectNode("sink", "sink", Box2D(400, 200, 500, 280), box3d=Box3D(0.5, 0.2, 3.0, 1.0, 0.5, 3.4))
    near = ObjectNode("cup_a", "cup", Box2D(300, 220, 340, 260), box3d=Box3D(0.1, 0.4, 3.1, 0.2, 0.5, 3.2))
    far_z = 3.1 if tie else 2.0
    # when tied, cup_b mirrors cup_a about the sink's center x = 0.75
    far_x = (1.3, 1.4) if tie else (-1.0, -0.9)
    far = ObjectNode("cup_b", "cup", Box2D(100, 220, 140, 260),
                     box3d=Box3D(far_x[0], 0.4, far_z, far_x[1], 0.5, far_z + 0.1))
    return _scene(sink, near, far)


def test_referring_cup_nearest_the_sink():
    scene = _nearest_scene()
    items = [it for it in gen_referring(scene, strategies=("nearest",)) if it.meta["target"].startswith("cup")]
    (item,) = items
    assert item.meta["caption"] == "the cup nearest the sink"
    assert item.answer == [[320, 240]]
    # oracle: exhaustive distance scan
    sink = scene.node("sink").box3d.center
    dists = {n.id: math.dist(n.box3d.center, sink) for n in scene.nodes if n.category == "cup"}
    assert min(dists, key=dists.get) == item.meta["target"]


def test_referring_skips_nearest_tie():
    scene = _nearest_scene(tie=True)
    cups = [it for it in gen_referring(scene, strategies=("nearest",)) if it.meta["target"].startswith("cup")]
    assert cups == []


# --- placement -----------------------------------------------------------------

def test_offset_phrasing():
    assert parse_offset("10cm") == pytest.approx(0.10)
    assert format_offset(0.10) == "10cm"
    assert parse_offset("0.3 m") == 0.3
    with pytest.raises(ValueError):
        parse_offset("ten cm")


def _band_oracle(scene, grid, anchor, direction, offset):
    """Every free cell whose center sits offset ± cell/2 beyond the anchor's 3D box."""
    b = scene.node(anchor).box3d
    half = grid.cell_size / 2
    ok = set()
    for r in range(grid.rows):
        for c in range(grid.cols):
            if grid.cells[r, c] != FREE:
                continue
            x = grid.origin[0] + (c + 0.5) * grid.cell_size
            z = grid.origin[1] + (r + 0.5) * grid.cell_size
            if direction in ("left", "right"):
                d = x - b.max_x if direction == "right" else b.min_x - x
                lateral_ok = b.min_z - 1e-9 <= z <= b.max_z + 1e-9
            else:
                d = z - b.max_z if direction == "behind" else b.min_z - z
                lateral_ok = b.min_x - 1e-9 <= x <= b.max_x + 1e-9
            if lateral_ok and offset - half - 1e-9 <= d <= offset + half + 1e-9:
                ok.add((r, c))
    return ok


def check_placement_item(scene, grid, item):
    meta = item.meta
    allowed = _band_oracle(scene, grid, meta["anchor"], meta["direction"], meta["offset_m"])
    assert 1 <= len(item.answer) <= 10
    for cell, world, px in zip(meta["cells"], meta["world"], item.answer):
        assert tuple(cell) in allowed
        u, v = project(world, scene.intrinsics)
        assert px == [round(u, 2), round(v, 2)]


def test_placement_right_of_chair():
    chair = object_on_floor("chair", "chair", 0.0, 3.0)
    scene = _scene(chair, intrinsics=random_scene(0).intrinsics)
    grid = build_occupancy(scene, 0.05)
    items = gen_placement(scene, grid, seed=0, offsets=(0.10,))
    (item,) = items
    assert "10cm" in item.prompt
    check_placement_item(scene, grid, item)


def test_placement_propagates_no_free_cell():
    chair = object_on_floor("chair", "chair", 0.0, 3.0)
    # boxes hug the chair on all four sides, so the 10cm band is fully occupied
    wall = [object_on_floor(f"box{i}", "box", x, z, size=size)
            for i, (x, z, size) in enumerate([(-0.375, 3.0, (0.3, 0.3, 0.45)), (0.375, 3.0, (0.3, 0.3, 0.45)),
                                              (0.0, 2.625, (0.45, 0.3, 0.3)), (0.0, 3.375, (0.45, 0.3, 0.3))])]
    scene = _scene(chair, *wall, intrinsics=random_scene(0).intrinsics)
    grid = build_occupancy(scene, 0.05)
    with pytest.raises(NoFreeCellError, match="no free cell"):
        gen_placement(scene, grid, seed=0, offsets=(0.10,), on_error="raise",
                      strategies=("ordinal",))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_placement_soundness_property(seed):
    scene = random_scene(seed)
    grid = build_occupancy(scene, 0.05)
    for item in gen_placement(scene, grid, seed=seed):
        check_placement_item(scene, grid, item)


# --- spatial MC ------------------------------------------------------------------

def test_mc_nearest_the_sofa():
    sofa = object_on_floor("sofa", "sofa", 0.0, 3.5)
    lamp = object_on_floor("lamp", "lamp", 1.0, 3.5)
    plant = object_on_floor("plant", "plant", -0.9, 2.3)
    box = object_on_floor("box", "box", 1.0, 2.2)
    scene = _scene(sofa, lamp, plant, box)
    items = [it for seed in range(40) for it in gen_spatial_mc(scene, seed=seed, per_scene=7)
             if it.meta["concept"] == "nearest" and it.meta["anchor"] == "sofa"]
    assert items
    for it in items:
        chosen = it.meta["options"][ord(it.answer) - 65]
        assert chosen == "the lamp"
        assert "Options:" in it.prompt and "(A)" in it.prompt


def test_mc_distance_matches_relation_engine():
    scene = random_scene(7)
    found = False
    for seed in range(30):
        for it in gen_spatial_mc(scene, seed=seed, per_scene=7):
            assert it.answer in "ABCD"
            if it.meta["concept"] != "distance":
                continue
            found = True
            r = evaluate_relation(scene, RelationQuery("distance", it.meta["subject"], it.meta["anchor"]))
            assert it.meta["value"] == r.value
            assert it.meta["options"][it.meta["correct_index"]] == f"{r.value:.2f} m"
    assert found


# --- whole-scene invariants ---------------------------------------------------------

@settings(max_examples=25, deadline=None)
@given(st.integers(0, 100_000), st.booleans())
def test_forge_invariants(seed, masks):
    scene = random_scene(seed, masks=masks, point_annotations=True)
    out = forge_scene(scene, seed=seed)
    w, h = scene.image_width, scene.image_height
    for fam, items in out.items():
        for it in items:
            it.validate()
            if it.target_kind == "points":
                assert len(it.answer) <= 10
                assert all(0 <= x <= w - 1 and 0 <= y <= h - 1 for x, y in it.answer)
            if fam in ("referring", "grounding"):
                assert resolve(scene, ResolverSpec.from_dict(it.meta["resolver"])) == [it.meta["target"]]
            if fam == "referring":
                assert len(it.answer) == 1
            if fam == "affordance" and it.meta["level"] == "object":
                assert not names_category(it.prompt, scene.node(it.meta["target"]).category)


def test_forge_is_deterministic():
    scene = random_scene(11, masks=True, point_annotations=True)
    a = forge_scene(scene, seed=5)
    b = forge_scene(scene, seed=5)
    assert {k: [i.to_dict() for i in v] for k, v in a.items()} == {k: [i.to_dict() for i in v] for k, v in b.items()}


def test_every_pointing_template_is_exercised():
    used = set()
    for seed in range(60):
        for it in gen_pointing(random_scene(seed), seed=seed):
            used.add(it.provenance["template"])
    assert len(used) == len(default_pack().family("pointing"))


def test_unknown_family_is_rejected():
    with pytest.raises(ValueError, match="unknown spatial family"):
        forge_scene(random_scene(1), families=("pointing", "ocr"))
