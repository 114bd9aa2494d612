"""Dense numeric primitives: feature maps, instance normalization, 1x1
convolution, matrix product and masked row softmax.

All stored values are float32. Reductions (matrix products, means,
variances, softmax sums) accumulate in float64 before the result is cast
back, which keeps row sums and linearity checks inside their stated
tolerances without giving up the 32-bit storage contract. Every operation
is a pure function over immutable inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ChannelMismatch, DegenerateRow, DimensionMismatch

FLOAT = np.float32


def _as_float32(data: np.ndarray) -> np.ndarray:
    # Copy so freezing never aliases (and never mutates) the caller's array.
    arr = np.array(data, dtype=FLOAT)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Image:
    """H x W x 3 raster with values in [0, 1], channel-interleaved."""

    data: np.ndarray

    def __post_init__(self):
        arr = _as_float32(self.data)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValueError(f"image must be (H, W, 3), got {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("image must be at least 1x1")
        if not np.isfinite(arr).all():
            raise ValueError("image contains non-finite values")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("image values must lie in [0, 1]")
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class FeatureMap:
    """(h*w) x f feature matrix, rows in row-major spatial order."""

    data: np.ndarray
    spatial_h: int
    spatial_w: int

    def __post_init__(self):
        arr = _as_float32(self.data)
        if arr.ndim != 2:
            raise ValueError(f"feature data must be 2-D, got {arr.shape}")
        if arr.shape[0] != self.spatial_h * self.spatial_w:
            raise DimensionMismatch(
                f"feature rows {arr.shape[0]} != grid "
                f"{self.spatial_h}x{self.spatial_w}"
            )
        if not np.isfinite(arr).all():
            raise ValueError("feature map contains non-finite values")
        object.__setattr__(self, "data", arr)

    @property
    def channels(self) -> int:
        return self.data.shape[1]

    @property
    def positions(self) -> int:
        return self.data.shape[0]

    def grid(self) -> np.ndarray:
        """View of the data as (h, w, f)."""
        return self.data.reshape(self.spatial_h, self.spatial_w, self.channels)


@dataclass(frozen=True)
class AttentionMap:
    """(content positions) x (style positions) score matrix.

    The pre-softmax form may contain -inf sentinels for masked entries;
    +inf and NaN are never valid.
    """

    data: np.ndarray

    def __post_init__(self):
        arr = _as_float32(self.data)
        if arr.ndim != 2:
            raise ValueError(f"attention data must be 2-D, got {arr.shape}")
        if np.isnan(arr).any() or np.isposinf(arr).any():
            raise ValueError("attention map contains NaN or +inf")
        object.__setattr__(self, "data", arr)

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class Conv1x1Params:
    """Pointwise projection: out = weight @ x + bias per spatial position."""

    weight: np.ndarray  # (f_out, f_in)
    bias: np.ndarray    # (f_out,)

    def __post_init__(self):
        w = _as_float32(self.weight)
        b = _as_float32(self.bias)
        if w.ndim != 2 or b.ndim != 1 or b.shape[0] != w.shape[0]:
            raise ValueError(
                f"bad 1x1 conv shapes: weight {w.shape}, bias {b.shape}"
            )
        if not (np.isfinite(w).all() and np.isfinite(b).all()):
            raise ValueError("1x1 conv parameters contain non-finite values")
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "bias", b)

    @property
    def in_channels(self) -> int:
        return self.weight.shape[1]

    @property
    def out_channels(self) -> int:
        return self.weight.shape[0]

    @staticmethod
    def identity(channels: int) -> "Conv1x1Params":
        return Conv1x1Params(np.eye(channels), np.zeros(channels))


def instance_norm(fmap: FeatureMap, eps: float = 1e-5) -> FeatureMap:
    """Standardize each channel over all spatial positions.

    Output is (x - mean) / sqrt(var + eps) with population statistics; eps
    keeps zero-variance channels finite (a constant channel maps to 0).
    """
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    data = fmap.data.astype(np.float64)
    mean = data.mean(axis=0)
    var = data.var(axis=0)
    out = (data - mean) / np.sqrt(var + eps)
    return FeatureMap(out.astype(FLOAT), fmap.spatial_h, fmap.spatial_w)


def conv1x1(fmap: FeatureMap, params: Conv1x1Params) -> FeatureMap:
    """Apply a pointwise projection to every spatial position."""
    if params.in_channels != fmap.channels:
        raise ChannelMismatch(
            f"1x1 conv expects {params.in_channels} channels, "
            f"feature map has {fmap.channels}"
        )
    out = (
        fmap.data.astype(np.float64) @ params.weight.T.astype(np.float64)
        + params.bias.astype(np.float64)
    )
    return FeatureMap(out.astype(FLOAT), fmap.spatial_h, fmap.spatial_w)


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Standard matrix product with float64 accumulation, float32 result."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionMismatch("matmul expects 2-D operands")
    if a.shape[1] != b.shape[0]:
        raise DimensionMismatch(
            f"inner dimensions disagree: {a.shape} x {b.shape}"
        )
    return (a.astype(np.float64) @ b.astype(np.float64)).astype(FLOAT)


def softmax_rows(ahat: AttentionMap) -> AttentionMap:
    """Numerically stable per-row softmax; -inf entries map to exactly 0.

    The shift-and-exponentiate runs in float64 so that every output row
    sums to 1 within 1e-6 after the cast back to float32.
    """
    data = ahat.data.astype(np.float64)
    neg = np.isneginf(data)
    dead = neg.all(axis=1)
    if dead.any():
        raise DegenerateRow(int(np.argmax(dead)))
    # Row max is finite because no row is entirely -inf; -inf - max stays -inf.
    shifted = data - data.max(axis=1, keepdims=True)
    expd = np.exp(shifted)
    out = expd / expd.sum(axis=1, keepdims=True)
    return AttentionMap(out.astype(FLOAT))
