"""3D visual grounding scorer (accuracy at IoU thresholds).

A prediction names a frame and a box in that frame's camera coordinates. The
box is lifted to world coordinates with the frame's ``world_from_camera``
pose, optionally snapped to the best-overlapping object proposal, and
compared with the ground-truth box (axis-aligned boxes carry zero angles).
"""

from dataclasses import dataclass, field

from joblib import Parallel, delayed
from sklearn.base import BaseEstimator

from .._validation import check_threshold
from ..geometry import iou_3d, transform_box
from ..protocol import ParseError, parse_grounding_response

__all__ = [
    "GroundingSample",
    "GroundingScorer",
    "lift_prediction_to_world",
    "refine_with_proposals",
    "score_grounding",
]


@dataclass(frozen=True)
class GroundingSample:
    sample_id: str
    scene_id: str
    query: str
    gt_box_world: object
    frame_poses: tuple
    proposals_world: tuple = None

    def __post_init__(self):
        if not self.frame_poses:
            raise ValueError(f"sample {self.sample_id}: frame_poses must be non-empty")
        if any(a != 0.0 for a in self.gt_box_world.angles):
            raise ValueError(f"sample {self.sample_id}: ground-truth box must have zero angles")
        object.__setattr__(self, "frame_poses", tuple(self.frame_poses))
        if self.proposals_world is not None:
            object.__setattr__(self, "proposals_world", tuple(self.proposals_world))


def lift_prediction_to_world(resp, frame_poses):
    """Move the predicted box from its frame's camera coordinates into world coordinates."""
    if not 0 <= resp.frame < len(frame_poses):
        raise IndexError(f"frame {resp.frame} out of range for {len(frame_poses)} frames")
    return transform_box(resp.box, frame_poses[resp.frame])


def refine_with_proposals(pred_world, proposals_world):
    """Return the proposal with the highest IoU against ``pred_world`` (lowest index on ties)."""
    proposals = list(proposals_world)
    if not proposals:
        raise ValueError("refine_with_proposals needs at least one proposal")
    best, best_iou = 0, -1.0
    for i, prop in enumerate(proposals):
        v = iou_3d(pred_world, prop)
        if v > best_iou:
            best, best_iou = i, v
    return proposals[best]


@dataclass
class SampleResult:
    sample_id: str
    iou: float
    iou_refined: float = None
    error: str = None


@dataclass
class GroundingReport:
    thresholds: tuple
    n_samples: int
    accuracy: dict
    accuracy_refined: dict = None
    per_sample: list = field(default_factory=list)

    def to_dict(self):
        out = {
            "task": "grounding",
            "n_samples": self.n_samples,
            "thresholds": list(self.thresholds),
            "accuracy": {f"{t:g}": a for t, a in self.accuracy.items()},
        }
        if self.accuracy_refined is not None:
            out["accuracy_refined"] = {f"{t:g}": a for t, a in self.accuracy_refined.items()}
        out["per_sample"] = [
            {k: v for k, v in vars(r).items() if v is not None} for r in self.per_sample
        ]
        return out


def _score_one(sample, text, refine):
    res = SampleResult(sample.sample_id, 0.0)
    has_props = bool(sample.proposals_world)
    if refine and has_props:
        res.iou_refined = 0.0
    if text is None:
        res.error = "missing prediction"
        return res
    try:
        resp = parse_grounding_response(text)
    except ParseError as exc:
        res.error = f"parse error ({exc.reason}): {exc}"
        return res
    try:
        pred = lift_prediction_to_world(resp, sample.frame_poses)
    except IndexError as exc:
        res.error = str(exc)
        return res
    res.iou = iou_3d(pred, sample.gt_box_world)
    if refine and has_props:
        res.iou_refined = iou_3d(refine_with_proposals(pred, sample.proposals_world),
                                 sample.gt_box_world)
    return res


def _accuracy(values, thresholds):
    n = len(values)
    return {t: (sum(v >= t for v in values) / n if n else 0.0) for t in thresholds}


def score_grounding(samples, predictions, thresholds=(0.25, 0.5), refine=True, n_jobs=1):
    """Score grounding predictions.

    Parameters
    ----------
    samples : list of GroundingSample
    predictions : dict
        Maps ``sample_id`` to the raw response text. Missing or unparseable
        responses, and out-of-range frame indices, count as misses.
    thresholds : tuple of float
    refine : bool, default=True
        Also report accuracy after proposal refinement for samples that carry
        proposals. Unrefined numbers are always reported.
    n_jobs : int, default=1

    Returns
    -------
    GroundingReport
    """
    thresholds = tuple(check_threshold(t) for t in thresholds)
    ordered = sorted(samples, key=lambda s: s.sample_id)
    if n_jobs == 1:
        results = [_score_one(s, predictions.get(s.sample_id), refine) for s in ordered]
    else:
        results = Parallel(n_jobs=n_jobs)(
            delayed(_score_one)(s, predictions.get(s.sample_id), refine) for s in ordered
        )
    report = GroundingReport(
        thresholds=thresholds,
        n_samples=len(results),
        accuracy=_accuracy([r.iou for r in results], thresholds),
        per_sample=results,
    )
    if refine and any(r.iou_refined is not None for r in results):
        # samples without proposals keep their raw IoU in the refined column
        refined = [r.iou if r.iou_refined is None else r.iou_refined for r in results]
        report.accuracy_refined = _accuracy(refined, thresholds)
    return report


class GroundingScorer(BaseEstimator):
    """Estimator-style wrapper around :func:`score_grounding`."""

    def __init__(self, thresholds=(0.25, 0.5), refine=True, n_jobs=1):
        self.thresholds = thresholds
        self.refine = refine
        self.n_jobs = n_jobs

    def score(self, samples, predictions):
        self.report_ = score_grounding(samples, predictions, self.thresholds,
                                       self.refine, self.n_jobs)
        return self.report_.accuracy
