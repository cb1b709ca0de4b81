from .captions import CaptionTier, UniquenessUnattainable, caption_hierarchy, ordinal_word, unique_caption
from .forge import (
    MAX_POINTS,
    PLACEMENT_OFFSETS,
    SPATIAL_FAMILIES,
    ForgeLog,
    forge_scene,
    format_offset,
    gen_affordance,
    gen_grounding,
    gen_placement,
    gen_pointing,
    gen_pointing_from_annotations,
    gen_referring,
    gen_spatial_mc,
    names_category,
    node_region,
    parse_offset,
)
from .resolver import ResolverSpec, resolve, resolves_uniquely
from .templates import Template, TemplateError, TemplatePack, default_pack
