"""Loading scene annotations and depth, and reading/writing JSONL shards."""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Sequence, Union

import jsonschema
import numpy as np

from .concepts import is_cataloged
from .types import (
    Box2D,
    Box3D,
    CameraIntrinsics,
    DepthMap,
    EmbodimentEntry,
    Mask2D,
    ObjectNode,
    PartAnnotation,
    PointAnnotation,
    QAItem,
    RelationEdge,
    SceneGraph,
    SceneValidationError,
)

SCHEMA_VERSION = 1

_num = {"type": "number"}
_box2d = {"type": "array", "items": _num, "minItems": 4, "maxItems": 4}

SCENE_SCHEMA: Dict[str, Any] = {
    "type": "object",
    "required": ["version", "scene_id", "image", "objects"],
    "properties": {
        "version": {"const": SCHEMA_VERSION},
        "scene_id": {"type": "string", "minLength": 1},
        "image": {
            "type": "object",
            "required": ["width", "height"],
            "properties": {
                "width": {"type": "integer", "minimum": 1},
                "height": {"type": "integer", "minimum": 1},
                "frames": {"type": "array", "items": {"type": "string"}},
            },
        },
        "intrinsics": {
            "type": "object",
            "required": ["fx", "fy", "cx", "cy"],
            "properties": {k: _num for k in ("fx", "fy", "cx", "cy")},
        },
        "depth": {
            "type": "object",
            "required": ["path"],
            "properties": {"path": {"type": "string"}, "sidecar": {"type": "string"}},
        },
        "gravity_rotation": {
            "type": "array",
            "minItems": 3,
            "maxItems": 3,
            "items": {"type": "array", "items": _num, "minItems": 3, "maxItems": 3},
        },
        "objects": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "category", "box"],
                "properties": {
                    "id": {"type": "string", "minLength": 1},
                    "category": {"type": "string", "minLength": 1},
                    "box": _box2d,
                    "mask": {
                        "type": "object",
                        "required": ["counts"],
                        "properties": {"counts": {"type": "array", "items": {"type": "integer", "minimum": 0}}},
                    },
                    "points_ref": {"type": "string"},
                    "box3d": {"type": "array", "items": _num, "minItems": 6, "maxItems": 6},
                    "attributes": {"type": "array", "items": {"type": "string"}},
                    "captions": {
                        "type": "object",
                        "properties": {k: {"type": "string"} for k in ("coarse", "attributed", "unique")},
                        "additionalProperties": False,
                    },
                    "parts": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["name", "box"],
                            "properties": {
                                "name": {"type": "string"},
                                "box": _box2d,
                                "affordance": {"type": "string"},
                            },
                        },
                    },
                    "functions": {"type": "array", "items": {"type": "string"}},
                    "facing_deg": _num,
                },
            },
        },
        "relations": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["subject", "object", "concept"],
                "properties": {
                    "subject": {"type": "string"},
                    "object": {"type": "string"},
                    "concept": {"type": "string"},
                    "value": _num,
                    "unit": {"type": "string"},
                },
            },
        },
        "embodiment": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "type"],
                "properties": {
                    "name": {"type": "string"},
                    "type": {"type": "string"},
                    "objects": {"type": "array", "items": {"type": "string"}},
                    "robot": {"type": "string"},
                },
            },
        },
        "point_annotations": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["source_id", "label", "points"],
                "properties": {
                    "source_id": {"type": "string"},
                    "label": {"type": "string"},
                    "points": {
                        "type": "array",
                        "items": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2},
                    },
                },
            },
        },
    },
}

_VALIDATOR = jsonschema.Draft7Validator(SCENE_SCHEMA)


def derive_seed(*parts: Any) -> int:
    """Stable 63-bit seed from arbitrary key parts (scene id, item id, global seed...)."""
    h = hashlib.sha256("\x1f".join(str(p) for p in parts).encode("utf-8")).digest()
    return int.from_bytes(h[:8], "big") >> 1


def _box(values: Sequence[float], width: int, height: int, where: str) -> Box2D:
    x1, y1, x2, y2 = (float(v) for v in values)
    x1, x2 = min(max(x1, 0.0), width), min(max(x2, 0.0), width)
    y1, y2 = min(max(y1, 0.0), height), min(max(y2, 0.0), height)
    try:
        return Box2D(x1, y1, x2, y2)
    except SceneValidationError as exc:
        raise SceneValidationError(f"{where}: {exc}") from None


def scene_from_dict(data: Mapping[str, Any]) -> SceneGraph:
    errors = sorted(_VALIDATOR.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        loc = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise SceneValidationError(f"schema violation at {loc}: {e.message}")

    width = data["image"]["width"]
    height = data["image"]["height"]
    nodes = []
    for i, obj in enumerate(data["objects"]):
        where = f"objects/{i} ({obj['id']})"
        mask = None
        if "mask" in obj:
            try:
                mask = Mask2D(width, height, tuple(obj["mask"]["counts"]))
            except SceneValidationError as exc:
                raise SceneValidationError(f"{where}: {exc}") from None
        box3d = None
        if "box3d" in obj:
            try:
                box3d = Box3D(*(float(v) for v in obj["box3d"]))
            except SceneValidationError as exc:
                raise SceneValidationError(f"{where}: {exc}") from None
        parts = tuple(
            PartAnnotation(p["name"], _box(p["box"], width, height, f"{where} part {p['name']}"),
                           p.get("affordance", ""))
            for p in obj.get("parts", [])
        )
        nodes.append(ObjectNode(
            id=obj["id"],
            category=obj["category"],
            box=_box(obj["box"], width, height, where),
            mask=mask,
            points_ref=obj.get("points_ref"),
            box3d=box3d,
            attributes=tuple(obj.get("attributes", ())),
            captions=dict(obj.get("captions", {})),
            parts=parts,
            functions=tuple(obj.get("functions", ())),
            facing_deg=obj.get("facing_deg"),
        ))

    edges = []
    for rel in data.get("relations", []):
        if not is_cataloged(rel["concept"]):
            raise SceneValidationError(f"relation concept {rel['concept']!r} not in catalog")
        edges.append(RelationEdge(rel["subject"], rel["object"], rel["concept"],
                                  rel.get("value"), rel.get("unit")))

    intrinsics = None
    if "intrinsics" in data:
        k = data["intrinsics"]
        intrinsics = CameraIntrinsics(k["fx"], k["fy"], k["cx"], k["cy"], width, height)

    rot = data.get("gravity_rotation")
    return SceneGraph(
        scene_id=data["scene_id"],
        image_width=width,
        image_height=height,
        nodes=tuple(nodes),
        edges=tuple(edges),
        frames=tuple(data["image"].get("frames", ())),
        embodiment=tuple(
            EmbodimentEntry(e["name"], e["type"], tuple(e.get("objects", ())), e.get("robot"))
            for e in data.get("embodiment", [])
        ),
        intrinsics=intrinsics,
        depth_ref=data.get("depth", {}).get("path"),
        gravity_rotation=tuple(tuple(float(v) for v in row) for row in rot) if rot else None,
        point_annotations=tuple(
            PointAnnotation(a["source_id"], a["label"], tuple((float(x), float(y)) for x, y in a["points"]))
            for a in data.get("point_annotations", [])
        ),
    )


def scene_to_dict(scene: SceneGraph) -> Dict[str, Any]:
    """Inverse of :func:`scene_from_dict` (optional fields omitted when empty)."""
    image: Dict[str, Any] = {"width": scene.image_width, "height": scene.image_height}
    if scene.frames:
        image["frames"] = list(scene.frames)
    objects = []
    for n in scene.nodes:
        obj: Dict[str, Any] = {"id": n.id, "category": n.category, "box": n.box.to_list()}
        if n.mask is not None:
            obj["mask"] = {"counts": list(n.mask.counts)}
        if n.points_ref is not None:
            obj["points_ref"] = n.points_ref
        if n.box3d is not None:
            obj["box3d"] = n.box3d.to_list()
        if n.attributes:
            obj["attributes"] = list(n.attributes)
        if n.captions:
            obj["captions"] = dict(n.captions)
        if n.parts:
            obj["parts"] = [{"name": p.name, "box": p.box.to_list(), "affordance": p.affordance}
                            for p in n.parts]
        if n.functions:
            obj["functions"] = list(n.functions)
        if n.facing_deg is not None:
            obj["facing_deg"] = n.facing_deg
        objects.append(obj)
    out: Dict[str, Any] = {"version": SCHEMA_VERSION, "scene_id": scene.scene_id, "image": image}
    if scene.intrinsics is not None:
        k = scene.intrinsics
        out["intrinsics"] = {"fx": k.fx, "fy": k.fy, "cx": k.cx, "cy": k.cy}
    if scene.depth_ref is not None:
        out["depth"] = {"path": scene.depth_ref}
    if scene.gravity_rotation is not None:
        out["gravity_rotation"] = [list(r) for r in scene.gravity_rotation]
    out["objects"] = objects
    if scene.edges:
        out["relations"] = [
            {k: v for k, v in (("subject", e.subject), ("object", e.object), ("concept", e.concept),
                               ("value", e.value), ("unit", e.unit)) if v is not None}
            for e in scene.edges
        ]
    if scene.embodiment:
        out["embodiment"] = [
            {k: v for k, v in (("name", e.name), ("type", e.type), ("objects", list(e.objects)),
                               ("robot", e.robot)) if v is not None}
            for e in scene.embodiment
        ]
    if scene.point_annotations:
        out["point_annotations"] = [
            {"source_id": a.source_id, "label": a.label, "points": [list(p) for p in a.points]}
            for a in scene.point_annotations
        ]
    return out


def save_scene(scene: SceneGraph, path: Union[str, os.PathLike]) -> None:
    Path(path).write_text(json.dumps(scene_to_dict(scene), indent=1) + "\n", encoding="utf-8")


def load_scene(annotation_path: Union[str, os.PathLike]) -> SceneGraph:
    path = Path(annotation_path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SceneValidationError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    try:
        return scene_from_dict(data)
    except SceneValidationError as exc:
        raise SceneValidationError(f"{path}: {exc}") from None


def load_depth(depth_path: Union[str, os.PathLike], sidecar_path: Union[str, os.PathLike]) -> DepthMap:
    """Read a flat little-endian float32 depth blob with a JSON ``{width, height}`` sidecar."""
    meta = json.loads(Path(sidecar_path).read_text(encoding="utf-8"))
    width, height = int(meta["width"]), int(meta["height"])
    blob = Path(depth_path).read_bytes()
    if len(blob) != width * height * 4:
        raise SceneValidationError(
            f"length mismatch: {len(blob)} bytes for {width}x{height} float32 map"
        )
    depth = np.frombuffer(blob, dtype="<f4").reshape(height, width).astype(np.float32)
    dm = DepthMap.from_array(depth)
    if not dm.valid.any():
        raise SceneValidationError("all-invalid depth map")
    return dm


def save_depth(depth: np.ndarray, depth_path: Union[str, os.PathLike],
               sidecar_path: Union[str, os.PathLike]) -> None:
    depth = np.asarray(depth, dtype="<f4")
    Path(depth_path).write_bytes(depth.tobytes())
    Path(sidecar_path).write_text(json.dumps({"width": depth.shape[1], "height": depth.shape[0]}))


def dumps_record(record: Mapping[str, Any]) -> str:
    return json.dumps(record, ensure_ascii=False, separators=(",", ":"), allow_nan=False)


def write_jsonl(records: Iterable[Mapping[str, Any]], shard_path: Union[str, os.PathLike]) -> Dict[str, Any]:
    """Write one JSON object per line and a ``.manifest.json`` sidecar; return the manifest."""
    path = Path(shard_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    digest = hashlib.sha256()
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            line = dumps_record(rec) + "\n"
            fh.write(line)
            digest.update(line.encode("utf-8"))
            count += 1
    manifest = {"shard": path.name, "count": count, "sha256": digest.hexdigest()}
    Path(str(path) + ".manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return manifest


def read_jsonl(shard_path: Union[str, os.PathLike]) -> List[Dict[str, Any]]:
    with open(shard_path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def write_shard(items: Sequence[QAItem], shard_path: Union[str, os.PathLike]) -> Dict[str, Any]:
    records = []
    for it in items:
        try:
            it.validate()
        except SceneValidationError as exc:
            raise SceneValidationError(f"invalid item {it.item_id}: {exc}") from None
        records.append(it.to_dict())
    return write_jsonl(records, shard_path)


def read_shard(shard_path: Union[str, os.PathLike]) -> List[QAItem]:
    return [QAItem.from_dict(d).validate() for d in read_jsonl(shard_path)]


def file_sha256(path: Union[str, os.PathLike]) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
