"""Input validation helpers shared by the estimators and the CLI."""

import math
import numbers

import numpy as np

ORTHO_TOL = 1e-9
ORTHO_REPAIR_TOL = 1e-4


def check_finite_scalar(x, name="value"):
    if isinstance(x, bool) or not isinstance(x, numbers.Real):
        raise TypeError(f"{name} must be a real number, got {type(x).__name__}")
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"{name} must be finite, got {x!r}")
    return x


def check_vector(v, length, name="vector"):
    arr = np.asarray(v, dtype=np.float64)
    if arr.shape != (length,):
        raise ValueError(f"{name} must have shape ({length},), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_boxes(X, allow_axis_aligned=False):
    """Validate an array of 9-DoF boxes.

    Parameters
    ----------
    X : array-like of shape (n_boxes, 9) or (9,)
        Rows of ``[x, y, z, w, h, d, yaw, pitch, roll]``.
    allow_axis_aligned : bool, default=False
        Accept 6-column rows and extend them with zero angles.

    Returns
    -------
    ndarray of shape (n_boxes, 9), float64
    """
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise ValueError(f"expected a 2D array of boxes, got ndim={arr.ndim}")
    if allow_axis_aligned and arr.shape[1] == 6:
        arr = np.hstack([arr, np.zeros((arr.shape[0], 3))])
    if arr.shape[1] != 9:
        raise ValueError(f"boxes must have 9 columns, got {arr.shape[1]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("boxes contain non-finite values")
    if np.any(arr[:, 3:6] < 0):
        raise ValueError("box sizes must be non-negative")
    return arr


def check_rotation(R, repair=True):
    """Return ``R`` as a proper rotation matrix.

    Rotations off by more than 1e-9 but at most 1e-4 (float32 noise in
    extrinsics files) are projected onto the nearest rotation; anything
    worse is rejected.
    """
    R = np.asarray(R, dtype=np.float64)
    if R.shape != (3, 3):
        raise ValueError(f"rotation must be 3x3, got {R.shape}")
    if not np.all(np.isfinite(R)):
        raise ValueError("rotation contains non-finite values")
    err = max(np.abs(R.T @ R - np.eye(3)).max(), abs(np.linalg.det(R) - 1.0))
    if err <= ORTHO_TOL:
        return R
    if repair and err <= ORTHO_REPAIR_TOL:
        return nearest_rotation(R)
    raise ValueError(f"matrix is not a rotation (orthonormality error {err:.3g})")


def nearest_rotation(M):
    U, _, Vt = np.linalg.svd(M)
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt))])
    return U @ D @ Vt


def check_threshold(t, name="threshold"):
    t = check_finite_scalar(t, name)
    if not 0.0 < t <= 1.0:
        raise ValueError(f"{name} must lie in (0, 1], got {t}")
    return t
