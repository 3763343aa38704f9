"""Scorers for grounding, detection and dense captioning."""

from .captioning import CaptionSample, CaptionScorer, bleu4, cider, iou_gated_scores, rouge_l, tokenize
from .detection import (
    COMMON_CLASSES,
    DetectionGroundTruth,
    DetectionScorer,
    greedy_match,
    macro_average,
    per_class_prf,
    score_detection,
)
from .grounding import (
    GroundingSample,
    GroundingScorer,
    lift_prediction_to_world,
    refine_with_proposals,
    score_grounding,
)
