"""Catalog of spatial concept tags.

The catalog is a reconstruction: a superset covering position, direction,
distance, size, ordinal, orientation and vacancy families. Every relation
edge and question template must use a tag from here.
"""

from __future__ import annotations

from typing import Dict, Tuple

POSITION = (
    "left_of",
    "right_of",
    "in_front_of",
    "behind",
    "above",
    "below",
    "on_top_of",
    "inside",
    "between",
)

# Bearing of the subject as seen from the anchor on the ground plane.
DIRECTION = (
    "dir_front",
    "dir_front_right",
    "dir_right",
    "dir_back_right",
    "dir_back",
    "dir_back_left",
    "dir_left",
    "dir_front_left",
)

DISTANCE = (
    "distance",
    "horizontal_distance",
    "vertical_distance",
    "nearest",
    "farthest",
)

SIZE = (
    "wider_than",
    "taller_than",
    "deeper_than",
    "larger_than",
    "width_of",
    "height_of",
    "depth_of",
    "tallest",
    "shortest",
    "largest",
    "smallest",
)

ORDINAL = (
    "kth_from_left",
    "kth_from_right",
    "kth_from_front",
    "kth_from_top",
)

ORIENTATION = (
    "facing_toward",
    "facing_away",
)

VACANCY = (
    "vacant_left",
    "vacant_right",
    "vacant_front",
    "vacant_behind",
)

FAMILIES: Dict[str, Tuple[str, ...]] = {
    "position": POSITION,
    "direction": DIRECTION,
    "distance": DISTANCE,
    "size": SIZE,
    "ordinal": ORDINAL,
    "orientation": ORIENTATION,
    "vacancy": VACANCY,
}

CATALOG: Tuple[str, ...] = tuple(tag for tags in FAMILIES.values() for tag in tags)

if len(set(CATALOG)) != len(CATALOG):
    raise RuntimeError("duplicate concept tags in catalog")

# Inverse pairs used for antisymmetry checks and distractor generation.
INVERSE = {
    "left_of": "right_of",
    "right_of": "left_of",
    "in_front_of": "behind",
    "behind": "in_front_of",
    "above": "below",
    "below": "above",
    "nearest": "farthest",
    "farthest": "nearest",
    "tallest": "shortest",
    "shortest": "tallest",
    "largest": "smallest",
    "smallest": "largest",
}

UNITS = {
    "distance": "m",
    "horizontal_distance": "m",
    "vertical_distance": "m",
    "width_of": "m",
    "height_of": "m",
    "depth_of": "m",
}


def family_of(tag: str) -> str:
    for fam, tags in FAMILIES.items():
        if tag in tags:
            return fam
    raise KeyError(f"concept {tag!r} not in catalog")


def is_cataloged(tag: str) -> bool:
    return tag in CATALOG
