"""Geometry, text protocol and evaluation tools for video-based 3D scene understanding."""

from .geometry import (
    OrientedBox3D,
    box_corners,
    box_volume,
    euler_from_rotation,
    intersection_volume,
    iou_3d,
    rotation_from_euler,
    transform_box,
)
from .poses import FirstFrameRebaser, Pose, compose, invert, rebase_to_first

__version__ = "0.1.0"
