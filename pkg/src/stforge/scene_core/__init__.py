from . import concepts
from .cleaning import CleaningLogEntry, CleanResult, clean_point_annotations, round_half_up, to_pixel
from .io import (
    derive_seed,
    file_sha256,
    load_depth,
    load_scene,
    read_jsonl,
    read_shard,
    save_depth,
    save_scene,
    scene_from_dict,
    scene_to_dict,
    write_jsonl,
    write_shard,
)
from .types import (
    FAMILIES,
    TARGET_KINDS,
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
    validate_payload,
)
