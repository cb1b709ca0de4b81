from .boxes import DEFAULT_TRIM, fit_aabb
from .camera import GeometryError, PointCloud, backproject, backproject_pixel, project, project_many
from .occupancy import (
    DIRECTIONS,
    FREE,
    UNKNOWN,
    Footprint,
    NoFreeCellError,
    OccupancyGrid,
    Placement,
    build_occupancy,
    candidate_cells,
    in_band,
    sample_placement,
)
from .relations import (
    RelationNotApplicable,
    RelationQuery,
    RelationResult,
    bearing_sector,
    evaluate_relation,
    ordinal_rank,
)
