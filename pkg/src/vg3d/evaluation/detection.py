"""Greedy-matching scorer for 3D video object detection.

Predictions carry no confidence, so they are matched in emitted order: each
one claims the unused ground-truth box of the same category with the highest
IoU, provided that IoU reaches the threshold. Per-category precision, recall
and F1 follow from the TP/FP/FN counts; "AP" is the class-averaged precision
at the fixed threshold, not the area under a PR curve.
"""

from collections import Counter
from dataclasses import dataclass, field
import re

from joblib import Parallel, delayed
from sklearn.base import BaseEstimator

from .._validation import check_threshold
from ..geometry import iou_3d
from ..protocol import DetectionResponse, ParseError, parse_detection_response

__all__ = [
    "COMMON_CLASSES",
    "DetectionGroundTruth",
    "MatchingResult",
    "DetectionScorer",
    "normalize_category",
    "greedy_match",
    "per_class_prf",
    "macro_average",
    "score_detection",
]

COMMON_CLASSES = (
    "chair", "pillow", "cabinet", "table", "lamp", "couch", "desk", "stand", "bed", "backpack",
    "bathtub", "ottoman", "dresser", "bin", "toilet", "refrigerator", "stove", "microwave",
    "monitor", "computer",
)

_WS = re.compile(r"\s+")


def normalize_category(label, aliases=None):
    """Lowercase, trim and collapse whitespace, then apply the alias table."""
    name = _WS.sub(" ", label.strip().lower())
    if aliases:
        name = aliases.get(name, name)
    return name


@dataclass(frozen=True)
class DetectionGroundTruth:
    scene_id: str
    boxes: tuple  # of (category, OrientedBox3D), frame-0 coordinates


@dataclass
class MatchingResult:
    tp: Counter = field(default_factory=Counter)
    fp: Counter = field(default_factory=Counter)
    fn: Counter = field(default_factory=Counter)
    pairs: list = field(default_factory=list)  # (pred index, gt index, iou)

    def categories(self):
        return sorted(set(self.tp) | set(self.fp) | set(self.fn))

    def merge(self, other):
        self.tp.update(other.tp)
        self.fp.update(other.fp)
        self.fn.update(other.fn)
        return self


def greedy_match(preds, gts, iou_threshold=0.25, aliases=None):
    """Match predictions to ground truth greedily in emitted order.

    Parameters
    ----------
    preds : DetectionResponse or sequence of (label, box)
    gts : DetectionGroundTruth or sequence of (label, box)
    iou_threshold : float in (0, 1]
    aliases : dict, optional
        Category alias table applied after normalization.

    Returns
    -------
    MatchingResult
    """
    iou_threshold = check_threshold(iou_threshold, "iou_threshold")
    pred_items = preds.items if isinstance(preds, DetectionResponse) else tuple(preds)
    gt_items = gts.boxes if isinstance(gts, DetectionGroundTruth) else tuple(gts)
    gt_cats = [normalize_category(c, aliases) for c, _ in gt_items]
    used = [False] * len(gt_items)
    result = MatchingResult()
    for pi, (label, box) in enumerate(pred_items):
        cat = normalize_category(label, aliases)
        best, best_iou = None, -1.0
        for gi, (gcat, (_, gbox)) in enumerate(zip(gt_cats, gt_items)):
            if used[gi] or gcat != cat:
                continue
            v = iou_3d(box, gbox)
            if v > best_iou:
                best, best_iou = gi, v
        if best is not None and best_iou >= iou_threshold:
            used[best] = True
            result.tp[cat] += 1
            result.pairs.append((pi, best, best_iou))
        else:
            result.fp[cat] += 1
    for gi, gcat in enumerate(gt_cats):
        if not used[gi]:
            result.fn[gcat] += 1
    return result


def _ratio(num, den):
    return num / den if den else 0.0


def per_class_prf(match):
    """Map each category to ``(precision, recall, f1)``; zero denominators give 0."""
    out = {}
    for cat in match.categories():
        tp, fp, fn = match.tp[cat], match.fp[cat], match.fn[cat]
        p = _ratio(tp, tp + fp)
        r = _ratio(tp, tp + fn)
        out[cat] = (p, r, _ratio(2 * p * r, p + r))
    return out


def macro_average(per_class, class_list=COMMON_CLASSES):
    """Unweighted mean of per-class P/R/F1 over listed classes that occur at all.

    A class is present when it shows up in the ground truth or the
    predictions; absent classes are skipped. Returns ``(AP, AR, F1)``.
    """
    if not class_list:
        raise ValueError("class_list must be non-empty")
    present = [c for c in class_list if c in per_class]
    if not present:
        return 0.0, 0.0, 0.0
    n = len(present)
    return tuple(sum(per_class[c][k] for c in present) / n for k in range(3))


@dataclass
class DetectionReport:
    iou_threshold: float
    class_list: tuple
    n_scenes: int
    counts: dict
    per_class: dict
    macro: tuple
    skipped_classes: list
    parse_warnings: dict

    def to_dict(self):
        return {
            "task": "detection",
            "iou_threshold": self.iou_threshold,
            "n_scenes": self.n_scenes,
            "macro": dict(zip(("AP", "AR", "F1"), self.macro)),
            "class_averaging": "classes absent from both ground truth and predictions are skipped",
            "skipped_classes": self.skipped_classes,
            "per_class": {
                c: {
                    "tp": self.counts[c][0], "fp": self.counts[c][1], "fn": self.counts[c][2],
                    "precision": p, "recall": r, "f1": f,
                }
                for c, (p, r, f) in self.per_class.items()
            },
            "parse_warnings": self.parse_warnings,
        }


def _match_scene(gt, text, iou_threshold, aliases, lenient):
    warnings = []
    if text is None:
        preds = DetectionResponse()
        warnings.append("missing prediction")
    else:
        try:
            preds = parse_detection_response(text, lenient=lenient)
            warnings.extend(preds.warnings)
        except ParseError as exc:
            preds = DetectionResponse()
            warnings.append(f"parse error ({exc.reason}): {exc}")
    return greedy_match(preds, gt, iou_threshold, aliases), warnings


def score_detection(ground_truth, predictions, iou_threshold=0.25, class_list=COMMON_CLASSES,
                    aliases=None, lenient=True, n_jobs=1):
    """Score per-scene detection responses against frame-0 ground truth.

    ``predictions`` maps scene id to raw response text. A response that fails
    to parse contributes no predictions (its ground truth all becomes FN).
    """
    ordered = sorted(ground_truth, key=lambda g: g.scene_id)
    args = [(g, predictions.get(g.scene_id), iou_threshold, aliases, lenient) for g in ordered]
    if n_jobs == 1:
        results = [_match_scene(*a) for a in args]
    else:
        results = Parallel(n_jobs=n_jobs)(delayed(_match_scene)(*a) for a in args)
    total = MatchingResult()
    warnings = {}
    for g, (match, warn) in zip(ordered, results):
        total.merge(match)
        if warn:
            warnings[g.scene_id] = warn
    classes = tuple(normalize_category(c, aliases) for c in class_list)
    prf = per_class_prf(total)
    per_class = {c: prf[c] for c in classes if c in prf}
    counts = {c: (total.tp[c], total.fp[c], total.fn[c]) for c in per_class}
    return DetectionReport(
        iou_threshold=iou_threshold,
        class_list=classes,
        n_scenes=len(ordered),
        counts=counts,
        per_class=per_class,
        macro=macro_average(prf, classes),
        skipped_classes=[c for c in classes if c not in prf],
        parse_warnings=warnings,
    )


class DetectionScorer(BaseEstimator):
    """Estimator-style wrapper around :func:`score_detection`."""

    def __init__(self, iou_threshold=0.25, class_list=COMMON_CLASSES, aliases=None,
                 lenient=True, n_jobs=1):
        self.iou_threshold = iou_threshold
        self.class_list = class_list
        self.aliases = aliases
        self.lenient = lenient
        self.n_jobs = n_jobs

    def score(self, ground_truth, predictions):
        self.report_ = score_detection(ground_truth, predictions, self.iou_threshold,
                                       self.class_list, self.aliases, self.lenient, self.n_jobs)
        return self.report_.macro
