"""Attention stylization pipeline.

Each content position attends over all style positions; the attended
style statistics (mean, standard deviation) re-modulate the normalized
content feature per position. Region control enters as -inf edits on the
pre-softmax attention map, so masked-out style positions get exactly zero
weight.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .codec import ModelParams, decode, encode
from .core import (
    FLOAT,
    AttentionMap,
    FeatureMap,
    Image,
    conv1x1,
    instance_norm,
    softmax_rows,
)
from .errors import ChannelMismatch, DimensionMismatch, EmptyPairWarning, MaskTooSmall
from .masks import (
    DownsampledMask,
    MaskPairSet,
    downsample_mask,
    fuse_attention,
    validate_fusion,
)


@dataclass(frozen=True)
class AttentionStats:
    """Per-content-position style statistics: mean and standard deviation."""

    mean: np.ndarray  # (h_c*w_c, f)
    std: np.ndarray   # (h_c*w_c, f)

    def __post_init__(self):
        mean = np.array(self.mean, dtype=FLOAT)
        std = np.array(self.std, dtype=FLOAT)
        if mean.ndim != 2 or mean.shape != std.shape:
            raise DimensionMismatch(
                f"stats shapes {mean.shape} / {std.shape} do not agree"
            )
        if not (np.isfinite(mean).all() and np.isfinite(std).all()):
            raise ValueError("attention statistics contain non-finite values")
        if (std < 0).any():
            raise ValueError("attention std must be nonnegative")
        mean.setflags(write=False)
        std.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)


def project_qkv(
    f_c: FeatureMap, f_s: FeatureMap, params: ModelParams, eps: float = 1e-5
) -> tuple[FeatureMap, FeatureMap, FeatureMap]:
    """Query from normalized content, key from normalized style, value raw."""
    q = conv1x1(instance_norm(f_c, eps), params.query)
    k = conv1x1(instance_norm(f_s, eps), params.key)
    v = conv1x1(f_s, params.value)
    return q, k, v


def raw_attention(q: FeatureMap, k: FeatureMap) -> AttentionMap:
    """Unscaled dot-product scores: one row per content position."""
    if q.channels != k.channels:
        raise ChannelMismatch(
            f"query has {q.channels} channels, key has {k.channels}"
        )
    scores = q.data.astype(np.float64) @ k.data.astype(np.float64).T
    return AttentionMap(scores.astype(FLOAT))


def adaattn_statistics(attn: AttentionMap, v: FeatureMap) -> AttentionStats:
    """Attention-weighted mean and std of the value feature per row.

    std is sqrt(E[v^2] - E[v]^2) under the row's attention weights, clamped
    at zero first: rounding can push the variance a hair negative.
    """
    if attn.cols != v.positions:
        raise DimensionMismatch(
            f"attention has {attn.cols} columns, value has {v.positions} positions"
        )
    a64 = attn.data.astype(np.float64)
    v64 = v.data.astype(np.float64)
    mean = a64 @ v64
    second = a64 @ (v64 * v64)
    var = np.maximum(second - mean * mean, 0.0)
    return AttentionStats(mean.astype(FLOAT), np.sqrt(var).astype(FLOAT))


def stylize_feature(
    f_c: FeatureMap, stats: AttentionStats, eps: float = 1e-5
) -> FeatureMap:
    """Re-modulate normalized content: std * IN(F_c) + mean, per position."""
    if stats.mean.shape != (f_c.positions, f_c.channels):
        raise DimensionMismatch(
            f"stats shape {stats.mean.shape} does not match feature "
            f"{(f_c.positions, f_c.channels)}"
        )
    normalized = instance_norm(f_c, eps)
    out = stats.std * normalized.data + stats.mean
    return FeatureMap(out, f_c.spatial_h, f_c.spatial_w)


def _downsample_pairs(
    content: Image,
    style: Image,
    pairs: MaskPairSet,
    grid_c: tuple[int, int],
    grid_s: tuple[int, int],
    block: int,
) -> list[tuple[DownsampledMask, DownsampledMask]]:
    """Reduce every mask pair to feature resolution, tagging errors by index."""
    out = []
    for i, pair in enumerate(pairs):
        if (pair.content.height, pair.content.width) != (content.height, content.width):
            raise DimensionMismatch(
                f"pair {i}: content mask is {pair.content.height}x"
                f"{pair.content.width}, image is {content.height}x{content.width}"
            )
        if (pair.style.height, pair.style.width) != (style.height, style.width):
            raise DimensionMismatch(
                f"pair {i}: style mask is {pair.style.height}x{pair.style.width}, "
                f"image is {style.height}x{style.width}"
            )
        content_ds = downsample_mask(pair.content, *grid_c, role="content", block=block)
        try:
            style_ds = downsample_mask(pair.style, *grid_s, role="style", block=block)
        except MaskTooSmall as exc:
            raise MaskTooSmall(f"pair {i}: {exc}", pair_index=i) from exc
        if content_ds.is_empty():
            warnings.warn(
                f"pair {i}: content mask vanished at feature resolution; "
                f"the pair has no effect",
                EmptyPairWarning,
            )
        out.append((content_ds, style_ds))
    return out


def stylize(
    content: Image,
    style: Image,
    pairs: MaskPairSet,
    params: ModelParams,
    eps: float = 1e-5,
) -> Image:
    """End-to-end region-paired stylization.

    Encode both images, project Q/K/V, score attention, inject the mask
    pairs as -inf edits, softmax, transfer attended statistics onto the
    normalized content feature, decode back to content resolution.
    """
    f_c = encode(content, params.encoder)
    f_s = encode(style, params.encoder)
    q, k, v = project_qkv(f_c, f_s, params, eps)
    ahat = raw_attention(q, k)
    if len(pairs):
        ds = _downsample_pairs(
            content,
            style,
            pairs,
            (f_c.spatial_h, f_c.spatial_w),
            (f_s.spatial_h, f_s.spatial_w),
            params.encoder.downsample,
        )
        ahat = fuse_attention(ahat, ds)
    validate_fusion(ahat)
    attn = softmax_rows(ahat)
    stats = adaattn_statistics(attn, v)
    f_cs = stylize_feature(f_c, stats, eps)
    return decode(f_cs, params.decoder, content.height, content.width)
