"""Rigid transforms and first-frame rebasing.

Every stored extrinsic is ``world_from_camera``: it maps points expressed in a
camera's frame into world coordinates. Loaders convert other conventions at
the boundary.
"""

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_boxes, check_rotation, check_vector
from .geometry import OrientedBox3D, transform_box

__all__ = [
    "Pose",
    "compose",
    "invert",
    "rebase_to_first",
    "FirstFrameRebaser",
]


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform ``x -> rotation @ x + translation``."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = check_rotation(self.rotation)
        t = check_vector(self.translation, 3, "translation")
        R = R.copy()
        t = t.copy()
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls):
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_translation(cls, t):
        return cls(np.eye(3), t)

    @classmethod
    def from_matrix(cls, T):
        """Build a pose from a 4x4 homogeneous matrix (the bottom row is checked)."""
        T = np.asarray(T, dtype=np.float64)
        if T.shape == (16,):
            T = T.reshape(4, 4)
        if T.shape != (4, 4):
            raise ValueError(f"pose matrix must be 4x4, got {T.shape}")
        if not np.allclose(T[3], [0.0, 0.0, 0.0, 1.0], atol=1e-6):
            raise ValueError("pose matrix bottom row must be [0, 0, 0, 1]")
        return cls(T[:3, :3], T[:3, 3])

    def as_matrix(self):
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T

    def apply(self, points):
        """Map points of shape (3,) or (n, 3)."""
        return np.asarray(points, dtype=np.float64) @ self.rotation.T + self.translation

    __call__ = apply

    def __repr__(self):
        return f"Pose(rotation={self.rotation.tolist()}, translation={self.translation.tolist()})"


def compose(a, b):
    """Return ``a ∘ b``, the pose applying ``b`` first and then ``a``."""
    return Pose(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def invert(p):
    Rt = p.rotation.T
    return Pose(Rt, -Rt @ p.translation)


def rebase_to_first(world_from_camera):
    """Express every camera pose relative to camera 0.

    Element ``i`` of the result maps camera-``i`` coordinates into camera-0
    coordinates; element 0 is the identity.
    """
    poses = list(world_from_camera)
    if not poses:
        raise ValueError("rebase_to_first needs at least one pose")
    first_from_world = invert(poses[0])
    return [compose(first_from_world, p) for p in poses]


class FirstFrameRebaser(TransformerMixin, BaseEstimator):
    """Move world-frame boxes into the coordinate system of the first frame.

    ``fit`` takes the per-frame ``world_from_camera`` poses (as :class:`Pose`
    objects or 4x4 matrices); ``transform`` maps an ``(n, 9)`` box array.
    """

    def fit(self, X, y=None):
        poses = [p if isinstance(p, Pose) else Pose.from_matrix(p) for p in X]
        if not poses:
            raise ValueError("FirstFrameRebaser.fit needs at least one pose")
        self.first_from_world_ = invert(poses[0])
        self.relative_poses_ = rebase_to_first(poses)
        self.n_frames_ = len(poses)
        return self

    def transform(self, X):
        check_is_fitted(self, "first_from_world_")
        boxes = check_boxes(X, allow_axis_aligned=True)
        out = [
            transform_box(OrientedBox3D.from_array(row), self.first_from_world_).to_array()
            for row in boxes
        ]
        return np.array(out).reshape(-1, 9)
