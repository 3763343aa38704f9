"""Numeric simulator of geometry/visual token fusion.

Image and geometry encoders both produce a ``(h // p, w // p, c)`` patch
grid. Visual tokens are compressed by grouping 2x2 neighbouring patches; the
geometry grid gets the same treatment: each 2x2 block is concatenated into a
``4c`` vector and sent through a two-layer MLP back to ``c`` channels. The
merged geometry tokens are then added to the merged visual tokens.

All arithmetic is float64.
"""

from dataclasses import dataclass
import math

import numpy as np
from scipy.special import erf
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils import check_random_state
from sklearn.utils.validation import check_is_fitted

__all__ = [
    "PatchGrid",
    "MergedGrid",
    "TwoLayerMlp",
    "patch_grid_shape",
    "merged_grid_shape",
    "merge_2x2",
    "fuse",
    "mlp_gradient_check",
    "PatchMerger",
    "save_array",
    "load_array",
]

GRID_TAGS = ("visual", "geometry")
MERGED_TAGS = ("visual-merged", "geometry-merged", "fused")

_SQRT1_2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _gelu(z):
    return 0.5 * z * (1.0 + erf(z * _SQRT1_2))


def _gelu_grad(z):
    return 0.5 * (1.0 + erf(z * _SQRT1_2)) + z * _INV_SQRT_2PI * np.exp(-0.5 * z * z)


_ACTIVATIONS = {
    "gelu": (_gelu, _gelu_grad),
    "identity": (lambda z: z, lambda z: np.ones_like(z)),
}


def patch_grid_shape(h, w, p):
    """Rows and columns of the patch grid for an ``h x w`` image with patch size ``p``."""
    if min(h, w, p) < 1:
        raise ValueError("h, w and p must be positive")
    return h // p, w // p


def merged_grid_shape(h, w, p):
    rows, cols = patch_grid_shape(h, w, p)
    if rows % 2 or cols % 2:
        raise ValueError(f"patch grid {rows}x{cols} is not even; 2x2 merging needs even sides")
    return h // (2 * p), w // (2 * p)


@dataclass(frozen=True)
class PatchGrid:
    features: np.ndarray  # (rows, cols, channels)
    tag: str = "visual"

    def __post_init__(self):
        f = np.asarray(self.features, dtype=np.float64)
        if f.ndim != 3 or min(f.shape[:2]) < 1:
            raise ValueError(f"patch grid must be (rows>=1, cols>=1, channels), got {f.shape}")
        if self.tag not in GRID_TAGS:
            raise ValueError(f"unknown grid tag {self.tag!r}")
        object.__setattr__(self, "features", f)

    @property
    def shape(self):
        return self.features.shape


@dataclass(frozen=True)
class MergedGrid:
    features: np.ndarray
    tag: str = "visual-merged"

    def __post_init__(self):
        f = np.asarray(self.features, dtype=np.float64)
        if f.ndim != 3:
            raise ValueError(f"merged grid must be 3-dimensional, got {f.shape}")
        if self.tag not in MERGED_TAGS:
            raise ValueError(f"unknown merged-grid tag {self.tag!r}")
        object.__setattr__(self, "features", f)

    @property
    def shape(self):
        return self.features.shape


@dataclass(frozen=True)
class TwoLayerMlp:
    """``act(x @ W1 + b1) @ W2 + b2``; the activation follows the first layer only."""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    activation: str = "gelu"

    def __post_init__(self):
        for name in ("W1", "b1", "W2", "b2"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} has non-finite entries")
            object.__setattr__(self, name, arr)
        d_in, d_hidden = self.W1.shape
        if self.b1.shape != (d_hidden,) or self.W2.shape[0] != d_hidden:
            raise ValueError("inconsistent hidden width")
        if self.b2.shape != (self.W2.shape[1],):
            raise ValueError("output bias does not match W2")
        if d_in != 4 * self.W2.shape[1]:
            raise ValueError(f"input width {d_in} must be 4x the output width {self.W2.shape[1]}")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @classmethod
    def init(cls, channels, hidden, activation="gelu", random_state=0, scale=0.1):
        """Seeded uniform initialization in ``[-scale, scale]``."""
        rng = check_random_state(random_state)
        return cls(
            W1=rng.uniform(-scale, scale, (4 * channels, hidden)),
            b1=rng.uniform(-scale, scale, hidden),
            W2=rng.uniform(-scale, scale, (hidden, channels)),
            b2=rng.uniform(-scale, scale, channels),
            activation=activation,
        )

    @property
    def in_features(self):
        return self.W1.shape[0]

    @property
    def out_features(self):
        return self.W2.shape[1]

    def forward(self, x):
        act, _ = _ACTIVATIONS[self.activation]
        return act(x @ self.W1 + self.b1) @ self.W2 + self.b2

    __call__ = forward

    def gradients(self, x):
        """Parameter gradients of ``sum(forward(x))``."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        act, dact = _ACTIVATIONS[self.activation]
        z = x @ self.W1 + self.b1
        hidden = act(z)
        g_out = np.ones((x.shape[0], self.out_features))
        g_z = (g_out @ self.W2.T) * dact(z)
        return {
            "W1": x.T @ g_z,
            "b1": g_z.sum(axis=0),
            "W2": hidden.T @ g_out,
            "b2": g_out.sum(axis=0),
        }

    def replace(self, **params):
        fields = {k: getattr(self, k) for k in ("W1", "b1", "W2", "b2", "activation")}
        fields.update(params)
        return TwoLayerMlp(**fields)


def _blocks(features):
    rows, cols, c = features.shape
    if rows % 2 or cols % 2:
        raise ValueError(f"grid {rows}x{cols} has an odd side; 2x2 merging needs even sides")
    # (r, dr, c, dc, ch) -> (r, c, dr, dc, ch): block order is
    # [2r][2c], [2r][2c+1], [2r+1][2c], [2r+1][2c+1]
    b = features.reshape(rows // 2, 2, cols // 2, 2, c).transpose(0, 2, 1, 3, 4)
    return b.reshape(rows // 2, cols // 2, 4 * c)


def merge_2x2(grid, mlp):
    """Concatenate each 2x2 block of ``grid`` and map it through ``mlp``."""
    features = grid.features if isinstance(grid, PatchGrid) else np.asarray(grid, dtype=np.float64)
    c = features.shape[-1]
    if mlp.in_features != 4 * c or mlp.out_features != c:
        raise ValueError(
            f"MLP maps {mlp.in_features}->{mlp.out_features}, grid needs {4 * c}->{c}"
        )
    blocks = _blocks(features)
    out = mlp(blocks.reshape(-1, 4 * c)).reshape(blocks.shape[0], blocks.shape[1], c)
    tag = "geometry-merged" if getattr(grid, "tag", "geometry") == "geometry" else "visual-merged"
    return MergedGrid(out, tag)


def fuse(geo, vis):
    """Geometry-augmented tokens: elementwise ``geo + vis``."""
    if geo.shape != vis.shape:
        raise ValueError(f"cannot fuse grids of shape {geo.shape} and {vis.shape}")
    return MergedGrid(geo.features + vis.features, "fused")


def mlp_gradient_check(mlp, x, step=1e-5):
    """Largest relative gap between analytic and central-difference gradients.

    The loss is the sum of all MLP outputs over the rows of ``x``. Each entry
    contributes ``|a - n| / max(1, |a|, |n|)``, i.e. a relative error for
    large gradients and an absolute one near zero.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    analytic = mlp.gradients(x)
    worst = 0.0
    for name, grad in analytic.items():
        param = getattr(mlp, name)
        flat = param.ravel()
        for i in range(flat.size):
            plus, minus = flat.copy(), flat.copy()
            plus[i] += step
            minus[i] -= step
            f_plus = mlp.replace(**{name: plus.reshape(param.shape)})(x).sum()
            f_minus = mlp.replace(**{name: minus.reshape(param.shape)})(x).sum()
            numeric = (f_plus - f_minus) / (2 * step)
            a = grad.ravel()[i]
            worst = max(worst, abs(a - numeric) / max(1.0, abs(a), abs(numeric)))
    return worst


class PatchMerger(TransformerMixin, BaseEstimator):
    """2x2 patch merging with a seeded two-layer MLP, as a transformer.

    Parameters
    ----------
    hidden_dim : int or None, default=None
        MLP hidden width; ``None`` uses ``4 * channels``.
    activation : {"gelu", "identity"}, default="gelu"
    random_state : int, RandomState instance or None, default=0

    Attributes
    ----------
    mlp_ : TwoLayerMlp
    n_channels_ : int
    """

    def __init__(self, hidden_dim=None, activation="gelu", random_state=0):
        self.hidden_dim = hidden_dim
        self.activation = activation
        self.random_state = random_state

    @staticmethod
    def _check_grids(X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 3:
            X = X[None]
        if X.ndim != 4:
            raise ValueError(f"expected (rows, cols, c) or (n, rows, cols, c), got {X.shape}")
        if X.shape[1] % 2 or X.shape[2] % 2:
            raise ValueError(f"grid {X.shape[1]}x{X.shape[2]} has an odd side")
        return X

    def fit(self, X, y=None):
        X = self._check_grids(X)
        self.n_channels_ = X.shape[-1]
        hidden = self.hidden_dim or 4 * self.n_channels_
        self.mlp_ = TwoLayerMlp.init(self.n_channels_, hidden, self.activation, self.random_state)
        return self

    def transform(self, X):
        check_is_fitted(self, "mlp_")
        single = np.ndim(X) == 3
        X = self._check_grids(X)
        if X.shape[-1] != self.n_channels_:
            raise ValueError(f"fitted on {self.n_channels_} channels, got {X.shape[-1]}")
        out = np.stack([merge_2x2(PatchGrid(g, "geometry"), self.mlp_).features for g in X])
        return out[0] if single else out


def save_array(path, array):
    """Write ``array`` as a shape header line followed by row-major values, one per line."""
    array = np.asarray(array, dtype=np.float64)
    with open(path, "w") as fh:
        fh.write("shape " + " ".join(str(d) for d in array.shape) + "\n")
        for v in array.ravel():
            fh.write(repr(float(v)) + "\n")


def load_array(path):
    with open(path) as fh:
        header = fh.readline().split()
        if not header or header[0] != "shape":
            raise ValueError(f"{path}: missing 'shape' header")
        shape = tuple(int(d) for d in header[1:])
        values = np.array([float(line) for line in fh if line.strip()])
    if values.size != math.prod(shape):
        raise ValueError(f"{path}: expected {math.prod(shape)} values, found {values.size}")
    return values.reshape(shape)
