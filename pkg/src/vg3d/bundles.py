"""Readers for prediction files and ground-truth bundles.

Predictions (all tasks) are JSON lines ``{"id": ..., "response": ...}``;
``sample_id`` / ``scene_id`` / ``object_id`` are accepted for the id and
``raw_response_text`` / ``text`` for the response.

Grounding GT, JSON lines::

    {"sample_id", "scene_id", "query",
     "gt_box": [x, y, z, w, h, d] or 9 numbers,
     "frame_poses": [[16 numbers row-major world_from_camera], ...],
     "proposals": [[9 numbers], ...]}          # optional, world frame

Proposals file (``--proposals``), JSON lines ``{"scene_id", "boxes": [[9]...]}``.

Detection GT, one JSON document::

    {"classes": [...], "scenes": [{"scene_id", "boxes": [{"label", "bbox_3d"}]}]}

Caption GT, JSON lines::

    {"object_id", "proposal_box", "gt_box", "references": [...], "candidate"}
"""

import json
from pathlib import Path

from .evaluation.captioning import CaptionSample
from .evaluation.detection import COMMON_CLASSES, DetectionGroundTruth, normalize_category
from .evaluation.grounding import GroundingSample
from .geometry import OrientedBox3D
from .poses import Pose

_ID_KEYS = ("id", "sample_id", "scene_id", "object_id")
_TEXT_KEYS = ("response", "raw_response_text", "text")


class BundleError(ValueError):
    pass


def read_jsonl(path):
    records = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise BundleError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
            if not isinstance(rec, dict):
                raise BundleError(f"{path}:{lineno}: expected a JSON object")
            records.append(rec)
    return records


def _pick(rec, keys, what, where):
    for k in keys:
        if k in rec:
            return rec[k]
    raise BundleError(f"{where}: missing {what} (one of {', '.join(keys)})")


def read_predictions(path):
    """Map record id to raw response text; later duplicates are rejected."""
    preds = {}
    for i, rec in enumerate(read_jsonl(path), 1):
        where = f"{path}: record {i}"
        key = str(_pick(rec, _ID_KEYS, "id", where))
        text = _pick(rec, _TEXT_KEYS, "response text", where)
        if key in preds:
            raise BundleError(f"{where}: duplicate id {key!r}")
        preds[key] = text if isinstance(text, str) else json.dumps(text)
    return preds


def _box(values, where, axis_aligned=False):
    try:
        values = [float(v) for v in values]
        if axis_aligned and len(values) == 6:
            values += [0.0, 0.0, 0.0]
        return OrientedBox3D.from_array(values)
    except (TypeError, ValueError) as exc:
        raise BundleError(f"{where}: bad box ({exc})") from None


def read_grounding_bundle(path, proposals_path=None):
    scene_props = {}
    if proposals_path is not None:
        for i, rec in enumerate(read_jsonl(proposals_path), 1):
            where = f"{proposals_path}: record {i}"
            scene = str(_pick(rec, ("scene_id",), "scene_id", where))
            scene_props[scene] = [_box(b, where) for b in _pick(rec, ("boxes",), "boxes", where)]
    samples = []
    for i, rec in enumerate(read_jsonl(path), 1):
        where = f"{path}: record {i}"
        sid = str(_pick(rec, ("sample_id", "id"), "sample_id", where))
        scene = str(rec.get("scene_id", ""))
        gt = _box(_pick(rec, ("gt_box",), "gt_box", where), where, axis_aligned=True)
        try:
            poses = [Pose.from_matrix(p) for p in _pick(rec, ("frame_poses",), "frame_poses", where)]
        except ValueError as exc:
            raise BundleError(f"{where}: bad pose ({exc})") from None
        props = rec.get("proposals")
        props = [_box(b, where) for b in props] if props is not None else scene_props.get(scene)
        try:
            samples.append(GroundingSample(sid, scene, str(rec.get("query", "")), gt, poses, props))
        except ValueError as exc:
            raise BundleError(f"{where}: {exc}") from None
    return samples


def read_detection_bundle(path):
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise BundleError(f"{path}: invalid JSON ({exc.msg})") from None
    if not isinstance(doc, dict) or "scenes" not in doc:
        raise BundleError(f"{path}: expected an object with a 'scenes' list")
    classes = tuple(doc.get("classes") or COMMON_CLASSES)
    scenes = []
    for i, sc in enumerate(doc["scenes"]):
        where = f"{path}: scene {i}"
        sid = str(_pick(sc, ("scene_id",), "scene_id", where))
        boxes = []
        for j, b in enumerate(sc.get("boxes", [])):
            w = f"{where} box {j}"
            label = _pick(b, ("label",), "label", w)
            boxes.append((str(label), _box(_pick(b, ("bbox_3d", "box_3d"), "bbox_3d", w), w)))
        scenes.append(DetectionGroundTruth(sid, tuple(boxes)))
    return scenes, classes


def read_caption_bundle(path, predictions=None):
    samples = []
    for i, rec in enumerate(read_jsonl(path), 1):
        where = f"{path}: record {i}"
        oid = str(_pick(rec, ("object_id", "id"), "object_id", where))
        if predictions is not None:
            candidate = predictions.get(oid, "")
        else:
            candidate = rec.get("candidate", "")
        try:
            samples.append(CaptionSample(
                oid,
                _box(_pick(rec, ("proposal_box",), "proposal_box", where), where, True),
                _box(_pick(rec, ("gt_box",), "gt_box", where), where, True),
                tuple(_pick(rec, ("references",), "references", where)),
                str(candidate),
            ))
        except ValueError as exc:
            raise BundleError(f"{where}: {exc}") from None
    return samples


def read_aliases(path):
    doc = json.loads(Path(path).read_text())
    if not isinstance(doc, dict):
        raise BundleError(f"{path}: alias table must be a JSON object")
    return {normalize_category(str(k)): normalize_category(str(v)) for k, v in doc.items()}
