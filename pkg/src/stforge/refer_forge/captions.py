"""Hierarchical captions: coarse, attributed, and unique referring expressions."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence

from ..geometry3d.relations import RelationNotApplicable, RelationQuery, evaluate_relation, ordinal_key_2d
from ..scene_core.types import SceneGraph
from .resolver import ResolverSpec, resolves_uniquely

ORDINAL_WORDS = ("first", "second", "third", "fourth", "fifth", "sixth", "seventh", "eighth",
                 "ninth", "tenth")
AXIS_PHRASE = {"left": "from the left", "right": "from the right", "top": "from the top",
               "bottom": "from the bottom"}
DEFAULT_STRATEGIES = ("ordinal", "nearest", "attribute")


class UniquenessUnattainable(ValueError):
    pass


@dataclass(frozen=True)
class CaptionTier:
    level: str
    text: str
    resolver: ResolverSpec


def ordinal_word(k: int) -> str:
    if 1 <= k <= len(ORDINAL_WORDS):
        return ORDINAL_WORDS[k - 1]
    suffix = "th" if 10 <= k % 100 <= 20 else {1: "st", 2: "nd", 3: "rd"}.get(k % 10, "th")
    return f"{k}{suffix}"


def label_text(category: str) -> str:
    return category.replace("_", " ")


_IRREGULAR = {"knife": "knives", "shelf": "shelves", "person": "people", "mouse": "mice"}


def with_article(caption: str) -> str:
    """Noun phrase for a prompt slot: 'cup' -> 'the cup'."""
    return caption if caption.startswith("the ") else f"the {caption}"


def plural(category: str) -> str:
    words = label_text(category).split()
    last = words[-1]
    if last in _IRREGULAR:
        last = _IRREGULAR[last]
    elif last.endswith(("s", "x", "ch", "sh")):
        last += "es"
    elif last.endswith("y") and last[-2:-1] not in "aeiou":
        last = last[:-1] + "ies"
    else:
        last += "s"
    return " ".join(words[:-1] + [last])


def _ordinal_caption(scene: SceneGraph, node) -> Optional[CaptionTier]:
    same = [n for n in scene.nodes if n.category == node.category]
    for axis in ("left", "right", "top", "bottom"):
        key = ordinal_key_2d(node, axis)
        if any(n.id != node.id and abs(ordinal_key_2d(n, axis) - key) <= 1e-9 for n in same):
            continue
        k = 1 + sum(1 for n in same if ordinal_key_2d(n, axis) < key)
        text = f"the {ordinal_word(k)} {label_text(node.category)} {AXIS_PHRASE[axis]}"
        return CaptionTier("unique", text, ResolverSpec(node.category, (("ordinal", axis, k),)))
    return None


def _nearest_caption(scene: SceneGraph, node) -> Optional[CaptionTier]:
    if node.box3d is None:
        return None
    same = tuple(n.id for n in scene.nodes if n.category == node.category and n.box3d is not None)
    counts = {}
    for n in scene.nodes:
        counts[n.category] = counts.get(n.category, 0) + 1
    for anchor in sorted(scene.nodes, key=lambda n: n.id):
        if anchor.category == node.category or counts[anchor.category] != 1 or anchor.box3d is None:
            continue
        try:
            r = evaluate_relation(scene, RelationQuery("nearest", anchor.id, objects=same))
        except RelationNotApplicable:
            continue
        if r.value == node.id and not r.tied:
            text = f"the {label_text(node.category)} nearest the {label_text(anchor.category)}"
            return CaptionTier("unique", text,
                               ResolverSpec(node.category, (("nearest_to", anchor.category),)))
    return None


def _attribute_caption(scene: SceneGraph, node) -> Optional[CaptionTier]:
    same = [n for n in scene.nodes if n.category == node.category and n.id != node.id]
    for attr in node.attributes:
        if not any(attr in n.attributes for n in same):
            return CaptionTier("unique", f"the {attr} {label_text(node.category)}",
                               ResolverSpec(node.category, (("attribute", attr),)))
    return None


_BUILDERS = {"ordinal": _ordinal_caption, "nearest": _nearest_caption, "attribute": _attribute_caption}


def caption_hierarchy(scene: SceneGraph, node_id: str,
                      strategies: Sequence[str] = DEFAULT_STRATEGIES) -> List[CaptionTier]:
    """Coarse, attributed and unique tiers for one node.

    The unique tier is the first strategy (in ``strategies`` order) whose
    caption resolves to exactly this node; a lone instance of its category
    is uniquely named by the category alone.
    """
    node = scene.node(node_id)
    label = label_text(node.category)
    tiers = [CaptionTier("coarse", label, ResolverSpec(node.category))]
    if node.attributes:
        same = [n for n in scene.nodes if n.category == node.category and n.id != node.id]
        attr = next((a for a in node.attributes if not any(a in n.attributes for n in same)),
                    node.attributes[0])
        tiers.append(CaptionTier("attributed", f"{attr} {label}",
                                 ResolverSpec(node.category, (("attribute", attr),))))

    if sum(1 for n in scene.nodes if n.category == node.category) == 1:
        tiers.append(CaptionTier("unique", label, ResolverSpec(node.category)))
        return tiers
    for name in strategies:
        tier = _BUILDERS[name](scene, node)
        if tier is not None and resolves_uniquely(scene, tier.resolver, node.id):
            tiers.append(tier)
            return tiers
    raise UniquenessUnattainable(f"uniqueness unattainable for {node_id} in {scene.scene_id}")


def unique_caption(scene: SceneGraph, node_id: str,
                   strategies: Sequence[str] = DEFAULT_STRATEGIES) -> Optional[CaptionTier]:
    try:
        return caption_hierarchy(scene, node_id, strategies)[-1]
    except UniquenessUnattainable:
        return None
