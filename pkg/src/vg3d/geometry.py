"""Oriented 9-DoF boxes, Euler rotations and exact rotated-box IoU.

Angles follow the intrinsic yaw-pitch-roll convention
``R = Rz(yaw) @ Ry(pitch) @ Rx(roll)``.

Box corners are enumerated in a fixed order. With ``(sx, sy, sz)`` the signs
applied to the half sizes along the box's local axes::

    0: (-, -, -)   1: (+, -, -)   2: (+, +, -)   3: (-, +, -)
    4: (-, -, +)   5: (+, -, +)   6: (+, +, +)   7: (-, +, +)

so 0-3 is the bottom face (local -z) and 4-7 the top face.
"""

from dataclasses import dataclass
import math

import numpy as np

from ._validation import check_finite_scalar, check_vector

__all__ = [
    "OrientedBox3D",
    "rotation_from_euler",
    "euler_from_rotation",
    "box_corners",
    "box_volume",
    "intersection_volume",
    "iou_3d",
    "axis_aligned_iou",
    "transform_box",
]

CLIP_EPS = 1e-12
MIN_VOLUME = 1e-15
GIMBAL_TOL = 1e-9

_CORNER_SIGNS = np.array(
    [
        [-1, -1, -1],
        [1, -1, -1],
        [1, 1, -1],
        [-1, 1, -1],
        [-1, -1, 1],
        [1, -1, 1],
        [1, 1, 1],
        [-1, 1, 1],
    ],
    dtype=np.float64,
)

# Vertex loops counter-clockwise when seen from outside the box.
_BOX_FACES = (
    (0, 3, 2, 1),
    (4, 5, 6, 7),
    (0, 1, 5, 4),
    (3, 7, 6, 2),
    (0, 4, 7, 3),
    (1, 2, 6, 5),
)


@dataclass(frozen=True)
class OrientedBox3D:
    """A 9-DoF box: center (m), size ``(w, h, d)`` (m), angles ``(yaw, pitch, roll)`` (rad)."""

    center: tuple
    size: tuple
    angles: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        center = tuple(float(v) for v in check_vector(self.center, 3, "center"))
        size = tuple(float(v) for v in check_vector(self.size, 3, "size"))
        angles = tuple(float(v) for v in check_vector(self.angles, 3, "angles"))
        if min(size) < 0:
            raise ValueError(f"box size must be non-negative, got {size}")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "size", size)
        object.__setattr__(self, "angles", angles)

    @classmethod
    def from_array(cls, values):
        """Build a box from ``[x, y, z, w, h, d, yaw, pitch, roll]``.

        Six values are read as an axis-aligned box and extended with zero angles.
        """
        arr = np.asarray(values, dtype=np.float64).ravel()
        if arr.size == 6:
            arr = np.concatenate([arr, np.zeros(3)])
        if arr.size != 9:
            raise ValueError(f"a box needs 9 numbers, got {arr.size}")
        return cls(arr[0:3], arr[3:6], arr[6:9])

    def to_array(self):
        return np.array(self.center + self.size + self.angles, dtype=np.float64)

    @property
    def rotation(self):
        return rotation_from_euler(*self.angles)

    @property
    def volume(self):
        return box_volume(self)

    def corners(self):
        return box_corners(self)


def _rz(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _ry(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _rx(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rotation_from_euler(yaw, pitch, roll):
    """Rotation matrix ``Rz(yaw) @ Ry(pitch) @ Rx(roll)``."""
    yaw = check_finite_scalar(yaw, "yaw")
    pitch = check_finite_scalar(pitch, "pitch")
    roll = check_finite_scalar(roll, "roll")
    return _rz(yaw) @ _ry(pitch) @ _rx(roll)


def euler_from_rotation(R):
    """Decompose a rotation into ``(yaw, pitch, roll)``.

    At gimbal lock (``|R[2, 0]| >= 1 - 1e-9``) roll is set to 0 and the
    remaining rotation about the vertical is folded into yaw.
    """
    R = np.asarray(R, dtype=np.float64)
    r20 = R[2, 0]
    if abs(r20) >= 1.0 - GIMBAL_TOL:
        pitch = math.copysign(math.pi / 2, -r20)
        yaw = math.atan2(-R[0, 1], R[1, 1])
        return yaw, pitch, 0.0
    pitch = math.atan2(-r20, math.hypot(R[0, 0], R[1, 0]))
    yaw = math.atan2(R[1, 0], R[0, 0])
    roll = math.atan2(R[2, 1], R[2, 2])
    return yaw, pitch, roll


def box_corners(box):
    """Return the (8, 3) corner array in the module's documented order."""
    half = 0.5 * np.asarray(box.size)
    local = _CORNER_SIGNS * half
    return local @ box.rotation.T + np.asarray(box.center)


def box_volume(box):
    w, h, d = box.size
    return w * h * d


def axis_aligned_iou(a, b):
    """Closed-form IoU of two boxes, ignoring their angles."""
    ca, sa = np.asarray(a.center), np.asarray(a.size)
    cb, sb = np.asarray(b.center), np.asarray(b.size)
    lo = np.maximum(ca - sa / 2, cb - sb / 2)
    hi = np.minimum(ca + sa / 2, cb + sb / 2)
    inter = float(np.prod(np.clip(hi - lo, 0.0, None)))
    union = float(np.prod(sa) + np.prod(sb)) - inter
    return inter / union if union > 0 else 0.0


def _clip_faces(faces, axis, sign, bound):
    """Keep the part of a closed polytope where ``sign * p[axis] <= bound``.

    ``faces`` is a list of vertex loops (lists of 3-tuples), each
    counter-clockwise seen from outside. Returns the clipped face list,
    including the cap polygon on the clipping plane.
    """
    out_faces = []
    cap = []
    plane_face_kept = False
    for face in faces:
        dists = [sign * p[axis] - bound for p in face]
        if all(dd > CLIP_EPS for dd in dists):
            continue
        if all(dd <= CLIP_EPS for dd in dists):
            out_faces.append(face)
            on_plane = [abs(dd) <= CLIP_EPS for dd in dists]
            if all(on_plane):
                plane_face_kept = True
            cap.extend(p for p, flag in zip(face, on_plane) if flag)
            continue
        clipped = []
        s, ds = face[-1], dists[-1]
        for e, de in zip(face, dists):
            e_in = de <= CLIP_EPS
            s_in = ds <= CLIP_EPS
            if e_in != s_in:
                t = ds / (ds - de)
                q = [s[k] + t * (e[k] - s[k]) for k in range(3)]
                q[axis] = sign * bound
                q = tuple(q)
                clipped.append(q)
                cap.append(q)
            if e_in:
                clipped.append(e)
                if abs(de) <= CLIP_EPS:
                    cap.append(e)
            s, ds = e, de
        if len(clipped) >= 3:
            out_faces.append(clipped)
    if out_faces and not plane_face_kept and len(cap) >= 3:
        u, v = (axis + 1) % 3, (axis + 2) % 3
        cu = sum(p[u] for p in cap) / len(cap)
        cv = sum(p[v] for p in cap) / len(cap)
        cap.sort(key=lambda p: math.atan2(p[v] - cv, p[u] - cu))
        if sign < 0:
            cap.reverse()
        out_faces.append(cap)
    return out_faces


def _polytope_volume(faces):
    """Signed volume of a closed, outward-oriented polytope (divergence theorem)."""
    total = 0.0
    for face in faces:
        x0, y0, z0 = face[0]
        for i in range(1, len(face) - 1):
            x1, y1, z1 = face[i]
            x2, y2, z2 = face[i + 1]
            total += (
                x0 * (y1 * z2 - z1 * y2)
                - y0 * (x1 * z2 - z1 * x2)
                + z0 * (x1 * y2 - y1 * x2)
            )
    return total / 6.0


def intersection_volume(a, b):
    """Volume of ``a ∩ b``, by clipping ``a`` against the six half-spaces of ``b``."""
    vol_a, vol_b = box_volume(a), box_volume(b)
    if vol_a <= 0.0 or vol_b <= 0.0:
        return 0.0
    ca, cb = np.asarray(a.center), np.asarray(b.center)
    reach = 0.5 * (math.sqrt(sum(s * s for s in a.size)) + math.sqrt(sum(s * s for s in b.size)))
    if np.linalg.norm(ca - cb) > reach:
        return 0.0
    # work in b's local frame, where b is the axis-aligned box [-s/2, s/2]
    Rb = b.rotation
    local = (box_corners(a) - cb) @ Rb
    pts = [tuple(p) for p in local.tolist()]
    faces = [[pts[i] for i in face] for face in _BOX_FACES]
    half = [0.5 * s for s in b.size]
    for axis in range(3):
        for sign in (1.0, -1.0):
            faces = _clip_faces(faces, axis, sign, half[axis])
            if not faces:
                return 0.0
    vol = _polytope_volume(faces)
    if vol < MIN_VOLUME:
        return 0.0
    return min(vol, vol_a, vol_b)


def iou_3d(a, b):
    """Intersection over union of two oriented boxes; 0 when the union is empty."""
    inter = intersection_volume(a, b)
    union = box_volume(a) + box_volume(b) - inter
    if union <= 0.0:
        return 0.0
    return min(max(inter / union, 0.0), 1.0)


def transform_box(box, pose):
    """Apply a rigid transform (anything with ``rotation`` and ``translation``) to a box."""
    R = np.asarray(pose.rotation, dtype=np.float64)
    t = np.asarray(pose.translation, dtype=np.float64)
    center = R @ np.asarray(box.center) + t
    angles = euler_from_rotation(R @ box.rotation)
    return OrientedBox3D(center, box.size, angles)
