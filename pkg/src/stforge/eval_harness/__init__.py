from .metrics import (
    DegenerateRegion,
    ScoringError,
    action_match,
    affordance_score,
    box_iou,
    discrete_frechet,
    mc_accuracy,
    plan_components,
    plan_score,
    point_in_region_score,
)
from .report import EvalReport, GroupStat, ReportError, aggregate
from .scoring import (
    COORD_MODES,
    FAMILY_METRIC,
    ItemScore,
    Prediction,
    Reward,
    ground_truth_prediction,
    parse_for,
    rlvr_reward,
    score_item,
    to_pixels,
)

__all__ = [
    "COORD_MODES",
    "DegenerateRegion",
    "EvalReport",
    "FAMILY_METRIC",
    "GroupStat",
    "ItemScore",
    "Prediction",
    "ReportError",
    "Reward",
    "ScoringError",
    "action_match",
    "affordance_score",
    "aggregate",
    "box_iou",
    "discrete_frechet",
    "ground_truth_prediction",
    "mc_accuracy",
    "parse_for",
    "plan_components",
    "plan_score",
    "point_in_region_score",
    "rlvr_reward",
    "score_item",
    "to_pixels",
]
