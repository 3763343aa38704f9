"""Hand-built fixtures with analytically known IoUs.

Two unit cubes whose centers differ by ``dx`` along one axis have
IoU ``(1 - dx) / (1 + dx)``, so ``dx = (1 - v) / (1 + v)`` yields IoU ``v``.
"""

from fractions import Fraction
import math

import numpy as np

from vg3d.evaluation.detection import DetectionGroundTruth
from vg3d.evaluation.grounding import GroundingSample
from vg3d.geometry import OrientedBox3D, rotation_from_euler
from vg3d.poses import Pose


def offset_for_iou(v):
    return (1 - v) / (1 + v)


def cube(x=0.0, y=0.0, z=0.0, size=1.0):
    return OrientedBox3D((x, y, z), (size, size, size))


def box_list(box):
    return [round(float(v), 12) for v in box.to_array()]


# ---------------------------------------------------------------- detection
#
# scene s1  GT: chair@0, chair@3, table@6
#   preds: chair@0.2 (IoU 2/3 with chair@0 -> TP), chair@0.5 (only chair@0 is
#   close and it is used -> FP), table@6.5 (IoU 1/3 -> TP), lamp@10 (no lamp GT -> FP)
#   unmatched: chair@3 -> FN
# scene s2  GT: bed@0, lamp@3, chair@6
#   preds: "Bed "@0.74 (IoU 0.15 < 0.25 -> FP), bed@0 (TP), "table"@6 (no table
#   GT -> FP), lamp@3.5 (IoU 1/3 -> TP)
#   unmatched: chair@6 -> FN
# scene s3  GT: table g1@0, table g2@(0.25 + 3/7), bed@(5, 0, 0)
#   preds: p1 table@0.25 (IoU 0.6 with g1, 0.4 with g2 -> takes g1, TP),
#          p2 table@-1/3 (IoU 0.5 with g1 only, g1 used -> FP)
#   unmatched: g2 table, bed -> FN
#   (the optimal assignment p1-g2, p2-g1 would reach TP 2)
#
# totals    chair TP1 FP1 FN2 | table TP2 FP2 FN1 | bed TP1 FP1 FN1 | lamp TP1 FP1 FN0

DETECTION_CLASSES = ("chair", "table", "bed", "lamp", "sofa")
DETECTION_COUNTS = {
    "chair": (1, 1, 2),
    "table": (2, 2, 1),
    "bed": (1, 1, 1),
    "lamp": (1, 1, 0),
}


def detection_fixture():
    gts = [
        DetectionGroundTruth("s1", (("chair", cube(0)), ("chair", cube(3)), ("table", cube(6)))),
        DetectionGroundTruth("s2", (("bed", cube(0)), ("lamp", cube(3)), ("chair", cube(6)))),
        DetectionGroundTruth(
            "s3", (("table", cube(0)), ("table", cube(0.25 + 3 / 7)), ("bed", cube(5)))
        ),
    ]
    preds = {
        "s1": [("chair", cube(0.2)), ("chair", cube(0.5)), ("table", cube(6.5)),
               ("lamp", cube(10))],
        "s2": [("Bed ", cube(offset_for_iou(0.3) + 0.2)), ("bed", cube(0)), ("table", cube(6)),
               ("lamp", cube(3.5))],
        "s3": [("table", cube(0.25)), ("table", cube(-1 / 3))],
    }
    return gts, preds


def expected_detection_scores():
    """Per-class (P, R, F1) and macro (AP, AR, F1) as exact fractions."""
    per_class = {}
    for c, (tp, fp, fn) in DETECTION_COUNTS.items():
        p = Fraction(tp, tp + fp) if tp + fp else Fraction(0)
        r = Fraction(tp, tp + fn) if tp + fn else Fraction(0)
        f = 2 * p * r / (p + r) if p + r else Fraction(0)
        per_class[c] = (p, r, f)
    n = len(per_class)
    macro = tuple(sum(v[k] for v in per_class.values()) / n for k in range(3))
    return per_class, macro


def detection_response_text(items):
    entries = ", ".join(
        '{"label": "%s", "bbox_3d": [%s]}' % (label, ", ".join(repr(v) for v in box_list(box)))
        for label, box in items
    )
    return "```json\n[" + entries + "]\n```"


# ---------------------------------------------------------------- grounding

GROUNDING_IOUS = [1.0] * 3 + [0.3] * 4 + [0.1] * 3


def grounding_fixture():
    """Ten samples whose predictions reach the IoUs in ``GROUNDING_IOUS``.

    Every sample has two frames; the prediction lives in frame 1, whose pose
    is a quarter-turn yaw plus a translation, so the lifting step is
    exercised. The predicted camera-frame box carries the opposite yaw,
    which makes the lifted box axis-aligned again.
    """
    samples, preds = [], {}
    axes = np.eye(3)
    for i, v in enumerate(GROUNDING_IOUS):
        gt_center = np.array([i * 10.0, 1.0, -2.0])
        yaw = (i % 4) * math.pi / 2
        pose1 = Pose(rotation_from_euler(yaw, 0, 0), [0.5 * i, -1.0, 2.0])
        world_pred = gt_center + offset_for_iou(v) * axes[i % 3]
        cam_pred = pose1.rotation.T @ (world_pred - pose1.translation)
        sid = f"g{i:02d}"
        samples.append(GroundingSample(
            sid, f"scene{i % 2}", f"object number {i}",
            OrientedBox3D(gt_center, (1, 1, 1)),
            (Pose.identity(), pose1),
        ))
        vals = list(cam_pred) + [1, 1, 1, -yaw, 0, 0]
        preds[sid] = ('```json\n{"frame": 1, "bbox_3d": [%s]}\n```'
                      % ", ".join(repr(round(float(x), 12)) for x in vals))
    return samples, preds


def refinement_fixture(order=(0, 1, 2)):
    """A prediction plus three proposals with IoUs 0.1, 0.6, 0.3 (before reordering)."""
    pred = cube(0)
    props = [
        cube(offset_for_iou(0.1)),
        cube(0, offset_for_iou(0.6)),
        cube(0, 0, offset_for_iou(0.3)),
    ]
    ious = [0.1, 0.6, 0.3]
    return pred, [props[k] for k in order], [ious[k] for k in order]


# ---------------------------------------------------------------- captions

CAPTION_CORPUS = [
    ("a white cabinet in the corner of the room",
     ["a white cabinet stands in the corner", "the white cabinet is in the room corner"]),
    ("a brown wooden table next to the sofa",
     ["a brown table is next to the sofa", "wooden table beside a sofa"]),
    ("the black chair is under the desk",
     ["a black chair is placed under the desk", "black office chair under a desk"]),
    ("a small lamp on the nightstand",
     ["a small lamp sits on the nightstand", "the lamp is on a nightstand by the bed"]),
    ("a large bed with white sheets",
     ["a large bed with white sheets", "the bed has white sheets and two pillows"]),
    ("a trash bin near the door",
     ["the trash bin is next to the door", "a small bin by the door"]),
    ("the tv is mounted on the wall",
     ["a tv mounted on the wall", "the television hangs on the wall above the cabinet"]),
    ("a blue backpack on the floor",
     ["a blue backpack lies on the floor", "the backpack is on the floor near the bed"]),
    ("a tall bookshelf full of books",
     ["a tall bookshelf filled with books", "the bookshelf is full of books"]),
    ("the toilet is next to the sink",
     ["a white toilet beside the sink", "the toilet is to the left of the sink"]),
    ("a refrigerator in the kitchen",
     ["the refrigerator stands in the kitchen", "a silver refrigerator next to the stove"]),
    ("a microwave on top of the counter",
     ["a microwave sits on the counter", "the microwave is on the kitchen counter"]),
    ("the monitor is on the desk",
     ["a computer monitor on the desk", "the monitor sits on a wooden desk"]),
    ("a grey couch facing the tv",
     ["a grey couch faces the tv", "the couch is in front of the television"]),
    ("a pillow on the bed",
     ["a white pillow lies on the bed", "the pillow is at the head of the bed"]),
    ("a wooden dresser with drawers",
     ["a wooden dresser with four drawers", "the dresser has many drawers"]),
    ("a round ottoman in the middle",
     ["a round ottoman in the middle of the room", "the ottoman is in the center"]),
    ("the stove is beside the refrigerator",
     ["a stove next to the refrigerator", "the stove is left of the fridge"]),
    ("a bathtub in the bathroom",
     ["a white bathtub in the bathroom", "the bathtub is against the wall"]),
    ("purple elephant dancing quietly",
     ["a desk chair by the window", "the chair is near the window"]),
]


# ---------------------------------------------------------------- frames

def look_at(eye, target, up=(0.0, 0.0, 1.0)):
    """world_from_camera pose of a camera at ``eye`` looking at ``target`` (x right, y down)."""
    eye, target = np.asarray(eye, float), np.asarray(target, float)
    z = target - eye
    z /= np.linalg.norm(z)
    x = np.cross(z, up)
    if np.linalg.norm(x) < 1e-9:
        x = np.cross(z, (1.0, 0.0, 0.0))
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    return Pose(np.column_stack([x, y, z]), eye)


def best_frame_fixture(rng, n_frames=6):
    """A target instance seen from cameras at well-separated distances.

    Returns ``(target_box, annotations_args, poses, intrinsics)`` where
    annotations_args is a list of ``(frame, instance_id, box)``. A second,
    barely overlapping instance is visible in every frame from close range,
    so picking it instead of the target would change the answer.
    """
    from vg3d.data_prep import Intrinsics

    intr = Intrinsics(400.0, 400.0, 320.0, 240.0, 640, 480)
    target = OrientedBox3D(rng.uniform(-1, 1, 3), rng.uniform(0.3, 1.0, 3),
                           (rng.uniform(-math.pi, math.pi), 0.0, 0.0))
    decoy = OrientedBox3D(np.asarray(target.center) + [0.0, 0.0, 0.9 * target.size[2]],
                          target.size, target.angles)
    distances = rng.permutation(np.linspace(3.0, 8.0, n_frames))
    poses, anns = [], []
    for f, d in enumerate(distances):
        direction = rng.normal(size=3)
        direction[2] = abs(direction[2]) * 0.5
        direction /= np.linalg.norm(direction)
        aim = np.asarray(target.center) + rng.uniform(-0.1, 0.1, 3)
        poses.append(look_at(aim + d * direction, aim))
        if rng.random() < 0.8 or f == 0:
            anns.append((f, "obj-a", target))
        anns.append((f, "obj-b", decoy))
    return target, anns, poses, intr


# ---------------------------------------------------------------- CLI

DATA = __import__("pathlib").Path(__file__).resolve().parent / "data"

# arguments per subcommand, relative to DATA
CLI_CASES = {
    "eval-grounding": ["eval-grounding", "--pred", "grounding_pred.jsonl",
                       "--gt", "grounding_gt.jsonl", "--proposals", "grounding_proposals.jsonl"],
    "eval-detect": ["eval-detect", "--pred", "detection_pred.jsonl", "--gt", "detection_gt.json"],
    "eval-caption": ["eval-caption", "--gt", "caption_gt.jsonl"],
    "prep-frames": ["prep-frames", "--gt", "scenes", "--targets", "targets.jsonl",
                    "--strategy", "fps"],
    "fuse-demo": ["fuse-demo", "--grad-configs", "4", "--height", "224", "--width", "224"],
}


class chdir:
    def __init__(self, path):
        self.path = path

    def __enter__(self):
        import os

        self.old = os.getcwd()
        os.chdir(self.path)

    def __exit__(self, *exc):
        import os

        os.chdir(self.old)


def invoke(args):
    from click.testing import CliRunner

    from vg3d.cli import main

    with chdir(DATA):
        return CliRunner().invoke(main, args, catch_exceptions=False)


def run_report(name, out_dir, jobs=1, seed=0, extra=()):
    """Run one subcommand and return ``(json bytes, table bytes, stdout)``."""
    import pathlib

    out = pathlib.Path(out_dir) / f"{name}-{jobs}-{seed}.json"
    result = invoke(CLI_CASES[name] + ["--jobs", str(jobs), "--seed", str(seed),
                                       "--out", str(out), *extra])
    assert result.exit_code == 0, result.output
    return out.read_bytes(), out.with_suffix(".txt").read_bytes(), result.stdout
