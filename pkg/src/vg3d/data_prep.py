"""Dataset construction: frame sampling, best-frame selection and rebasing.

Scene bundle layout (one directory per scene, all plain text, ``#`` starts a
comment line)::

    frames.txt       <path> <timestamp_seconds>          one line per frame
    poses.txt        16 numbers, row-major 4x4 world_from_camera, one line per frame
    intrinsics.txt   fx fy cx cy width height             one line for all frames,
                                                          or one line per frame
    annotations.txt  <instance_id> <category> <9 box numbers> <frame,frame,...>

Categories containing spaces are written with underscores in
``annotations.txt`` and read back with spaces.
"""

from dataclasses import dataclass
import logging
import math
from pathlib import Path

import numpy as np
from scipy.spatial import ConvexHull, QhullError
from sklearn.base import BaseEstimator

from .geometry import OrientedBox3D, box_corners, iou_3d, transform_box
from .poses import Pose, invert

logger = logging.getLogger(__name__)

__all__ = [
    "Intrinsics",
    "FrameStream",
    "VisibleAnnotation",
    "NoMatchError",
    "uniform_sample",
    "fps_adaptive_sample",
    "FrameSampler",
    "project_box_area",
    "select_best_frame",
    "rebase_annotations",
    "load_scene_bundle",
]

DEPTH_EPS = 1e-6


class NoMatchError(LookupError):
    """No annotated instance overlaps the target box enough to be matched."""


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int


@dataclass(frozen=True)
class FrameStream:
    """Frames of one scene video.

    Either ``timestamps`` (strictly increasing seconds) or ``fps`` defines
    the timing; with neither, frames are taken as one second apart.
    """

    n_frames: int
    poses: tuple = None
    intrinsics: tuple = None
    timestamps: tuple = None
    fps: float = None

    def __post_init__(self):
        if self.n_frames < 1:
            raise ValueError("a frame stream needs at least one frame")
        if self.timestamps is not None:
            ts = tuple(float(t) for t in self.timestamps)
            if len(ts) != self.n_frames:
                raise ValueError("one timestamp per frame required")
            if any(b <= a for a, b in zip(ts, ts[1:])):
                raise ValueError("timestamps must be strictly increasing")
            object.__setattr__(self, "timestamps", ts)
        for name in ("poses", "intrinsics"):
            value = getattr(self, name)
            if value is not None:
                value = tuple(value)
                if len(value) == 1 and name == "intrinsics":
                    value = value * self.n_frames
                if len(value) != self.n_frames:
                    raise ValueError(f"one entry of {name} per frame required")
                object.__setattr__(self, name, value)

    def frame_times(self):
        if self.timestamps is not None:
            return np.asarray(self.timestamps)
        return np.arange(self.n_frames) / float(self.fps or 1.0)


@dataclass(frozen=True)
class VisibleAnnotation:
    frame: int
    instance_id: str
    box: OrientedBox3D
    category: str = ""


def uniform_sample(n, k):
    """``k`` evenly spread frame indices out of ``n``, always including both ends."""
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    if k == 1:
        return [0]
    out = []
    for j in range(k):
        idx = math.floor(j * (n - 1) / (k - 1) + 0.5)
        if out and idx <= out[-1]:
            idx = out[-1] + 1
        out.append(idx)
    return out


def fps_adaptive_sample(stream, target_fps=2.0, min_k=4, max_k=8):
    """Sample at ``target_fps`` and keep the frame count within ``[min_k, max_k]``.

    Each tick ``i / target_fps`` up to the last frame time picks its nearest
    frame. Too few picks fall back to uniform sampling of
    ``min(min_k, n_frames)`` frames; too many are uniformly thinned to
    ``max_k``.
    """
    if min_k > max_k or min_k < 1:
        raise ValueError("need 1 <= min_k <= max_k")
    times = stream.frame_times()
    t0 = times[0]
    n_ticks = int(math.floor((times[-1] - t0) * target_fps + 1e-9)) + 1
    picks = []
    for i in range(n_ticks):
        idx = int(np.argmin(np.abs(times - (t0 + i / target_fps))))
        if not picks or idx != picks[-1]:
            picks.append(idx)
    if len(picks) < min_k:
        return uniform_sample(stream.n_frames, min(min_k, stream.n_frames))
    if len(picks) > max_k:
        return [picks[i] for i in uniform_sample(len(picks), max_k)]
    return picks


class FrameSampler(BaseEstimator):
    """Frame index selection as an estimator.

    Parameters
    ----------
    strategy : {"uniform", "fps"}, default="uniform"
    n_frames : int, default=24
        Frame count for the uniform strategy (24 for grounding scenes,
        16 for captioning scenes).
    target_fps, min_frames, max_frames
        Settings of the adaptive strategy.
    """

    def __init__(self, strategy="uniform", n_frames=24, target_fps=2.0, min_frames=4,
                 max_frames=8):
        self.strategy = strategy
        self.n_frames = n_frames
        self.target_fps = target_fps
        self.min_frames = min_frames
        self.max_frames = max_frames

    def fit(self, X, y=None):
        stream = X if isinstance(X, FrameStream) else FrameStream(int(X))
        if self.strategy == "uniform":
            self.indices_ = uniform_sample(stream.n_frames, min(self.n_frames, stream.n_frames))
        elif self.strategy == "fps":
            self.indices_ = fps_adaptive_sample(stream, self.target_fps, self.min_frames,
                                                self.max_frames)
        else:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        return self

    def fit_transform(self, X, y=None):
        return self.fit(X).indices_


def _polygon_area(poly):
    if len(poly) < 3:
        return 0.0
    x = np.array([p[0] for p in poly])
    y = np.array([p[1] for p in poly])
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _clip_to_rect(poly, width, height):
    """Sutherland-Hodgman clip of a polygon against ``[0, width] x [0, height]``."""
    edges = ((0, 1.0, 0.0), (0, -1.0, -width), (1, 1.0, 0.0), (1, -1.0, -height))
    out = list(poly)
    for axis, sign, bound in edges:
        if not out:
            break
        src, out = out, []
        s = src[-1]
        ds = sign * s[axis] - bound
        for e in src:
            de = sign * e[axis] - bound
            if (de >= 0) != (ds >= 0):
                t = ds / (ds - de)
                out.append((s[0] + t * (e[0] - s[0]), s[1] + t * (e[1] - s[1])))
            if de >= 0:
                out.append(e)
            s, ds = e, de
    return out


def project_box_area(box_world, pose, intrinsics):
    """Area in pixels of the box's projected outline, clipped to the image.

    Corners closer than 1e-6 m to the camera plane, or behind it, are dropped
    before taking the convex hull.
    """
    pts = invert(pose).apply(box_corners(box_world))
    front = pts[pts[:, 2] > DEPTH_EPS]
    if len(front) < 3:
        return 0.0
    uv = np.column_stack([
        intrinsics.fx * front[:, 0] / front[:, 2] + intrinsics.cx,
        intrinsics.fy * front[:, 1] / front[:, 2] + intrinsics.cy,
    ])
    try:
        hull = ConvexHull(uv)
    except QhullError:
        return 0.0
    poly = [tuple(uv[i]) for i in hull.vertices]
    return _polygon_area(_clip_to_rect(poly, intrinsics.width, intrinsics.height))


def select_best_frame(target_box_world, annotations, stream, match_iou_min=0.25):
    """Frame in which the instance matching ``target_box_world`` appears largest.

    The instance whose annotated box has the highest IoU with the target is
    chosen (ties go to the smallest instance id); among the frames where it
    is visible the one with the largest projected area wins, ties going to
    the lowest frame index.
    """
    annotations = list(annotations)
    if not annotations:
        raise ValueError("select_best_frame needs at least one annotation")
    by_instance = {}
    for ann in annotations:
        by_instance.setdefault(ann.instance_id, []).append(ann)
    best_id, best_iou = None, -1.0
    for inst in sorted(by_instance, key=str):
        v = max(iou_3d(target_box_world, a.box) for a in by_instance[inst])
        if v > best_iou:
            best_id, best_iou = inst, v
    if best_iou < match_iou_min:
        raise NoMatchError(f"best instance IoU {best_iou:.4f} is below {match_iou_min}")
    best_frame, best_area = None, -1.0
    for ann in sorted(by_instance[best_id], key=lambda a: a.frame):
        if not 0 <= ann.frame < stream.n_frames:
            raise ValueError(f"annotation frame {ann.frame} outside the stream")
        area = project_box_area(ann.box, stream.poses[ann.frame], stream.intrinsics[ann.frame])
        if area > best_area:
            best_frame, best_area = ann.frame, area
    return best_frame


def rebase_annotations(boxes, first_frame_pose):
    """Move world-frame boxes into first-frame camera coordinates."""
    first_from_world = invert(first_frame_pose)
    return [transform_box(b, first_from_world) for b in boxes]


def _data_lines(path):
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line and not line.startswith("#"):
                yield line


def load_scene_bundle(directory):
    """Read a scene bundle directory into a stream plus its per-frame annotations."""
    d = Path(directory)
    frames = [line.split() for line in _data_lines(d / "frames.txt")]
    if not frames:
        raise ValueError(f"{d}: frames.txt lists no frames")
    timestamps = [float(f[1]) for f in frames] if all(len(f) > 1 for f in frames) else None
    poses = [Pose.from_matrix([float(v) for v in line.split()])
             for line in _data_lines(d / "poses.txt")]
    intr = []
    for line in _data_lines(d / "intrinsics.txt"):
        fx, fy, cx, cy, w, h = line.split()
        intr.append(Intrinsics(float(fx), float(fy), float(cx), float(cy), int(w), int(h)))
    stream = FrameStream(len(frames), poses=poses, intrinsics=intr, timestamps=timestamps)
    annotations = []
    ann_path = d / "annotations.txt"
    if ann_path.exists():
        for line in _data_lines(ann_path):
            parts = line.split()
            if len(parts) != 12:
                raise ValueError(f"{ann_path}: expected 12 fields, got {len(parts)}")
            box = OrientedBox3D.from_array([float(v) for v in parts[2:11]])
            for f in parts[11].split(","):
                annotations.append(
                    VisibleAnnotation(int(f), parts[0], box, parts[1].replace("_", " "))
                )
    return stream, annotations
