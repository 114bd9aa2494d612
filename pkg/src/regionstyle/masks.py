"""Binary region masks: serialization, downsampling to feature resolution,
attention fusion with sequential-overwrite semantics, and the global
statistics adapter.

A mask pair couples a content-image region with the style-image region it
should draw style from. Fusion edits a pre-softmax attention map so that
rows selected by a content mask carry -inf outside the paired style
columns; a later pair fully replaces an earlier pair's control on shared
rows (restore first, then mask).
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np
from PIL import Image as PILImage

from .core import FLOAT, AttentionMap, FeatureMap, instance_norm
from .errors import (
    DegenerateRow,
    EmptyStyleMask,
    GridMismatch,
    LengthMismatch,
)
from .errors import MaskTooSmall

NEG_INF = np.float32(-np.inf)


@dataclass(frozen=True)
class Mask:
    """Full-resolution binary membership, one bit per image pixel."""

    bits: np.ndarray  # (H, W) bool

    def __post_init__(self):
        arr = np.array(self.bits, dtype=bool)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"mask must be 2-D and non-empty, got {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "bits", arr)

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    def is_empty(self) -> bool:
        return not self.bits.any()

    @staticmethod
    def empty(height: int, width: int) -> "Mask":
        return Mask(np.zeros((height, width), dtype=bool))

    @staticmethod
    def full(height: int, width: int) -> "Mask":
        return Mask(np.ones((height, width), dtype=bool))


@dataclass(frozen=True)
class MaskPair:
    """One user directive: this content region takes style from that region."""

    content: Mask
    style: Mask


@dataclass(frozen=True)
class MaskPairSet:
    """Ordered pair list; order is semantic (later pairs overwrite earlier)."""

    pairs: tuple[MaskPair, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple(self.pairs))

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self) -> Iterator[MaskPair]:
        return iter(self.pairs)

    def __getitem__(self, i: int) -> MaskPair:
        return self.pairs[i]


@dataclass(frozen=True)
class DownsampledMask:
    """Mask bits at feature-grid resolution."""

    bits: np.ndarray  # (h, w) bool
    spatial_h: int
    spatial_w: int

    def __post_init__(self):
        arr = np.array(self.bits, dtype=bool)
        if arr.shape != (self.spatial_h, self.spatial_w):
            raise GridMismatch(
                f"downsampled bits {arr.shape} != grid "
                f"{self.spatial_h}x{self.spatial_w}"
            )
        arr.setflags(write=False)
        object.__setattr__(self, "bits", arr)

    def flat(self) -> np.ndarray:
        """Row-major boolean selector over feature positions."""
        return self.bits.reshape(-1)

    def is_empty(self) -> bool:
        return not self.bits.any()


def _block_edges(pixels: int, cells: int, step: int | None) -> np.ndarray:
    """Cell boundaries for a ceiling tiling of `pixels` into `cells` blocks."""
    if cells < 1 or pixels < cells:
        raise GridMismatch(f"cannot tile {pixels} pixels onto {cells} cells")
    if step is None:
        step = -(-pixels // cells)  # ceil division
    if -(-pixels // step) != cells:
        raise GridMismatch(
            f"grid of {cells} cells does not tile {pixels} pixels "
            f"with block size {step}"
        )
    edges = np.minimum(np.arange(cells + 1) * step, pixels)
    return edges


def downsample_mask(
    mask: Mask,
    grid_h: int,
    grid_w: int,
    role: str = "content",
    block: int | None = None,
) -> DownsampledMask:
    """Reduce a pixel mask to a feature grid by majority vote per block.

    A cell is set iff at least 50% of its pixel block is set (ties set).
    `block` is the encoder's downsampling factor; when omitted it is
    inferred as ceil(pixels / cells) per axis. Boundary blocks are clipped
    to the image, and coverage is measured against the pixels actually
    present. For role="style" a non-empty mask that vanishes at grid
    resolution raises MaskTooSmall, because an empty style target would
    force all--inf attention rows downstream.
    """
    if role not in ("content", "style"):
        raise ValueError(f"role must be 'content' or 'style', got {role!r}")
    ye = _block_edges(mask.height, grid_h, block)
    xe = _block_edges(mask.width, grid_w, block)
    # Per-block set counts via a 2-D prefix sum.
    csum = np.zeros((mask.height + 1, mask.width + 1), dtype=np.int64)
    np.cumsum(np.cumsum(mask.bits, axis=0), axis=1, out=csum[1:, 1:])
    blk = (
        csum[np.ix_(ye[1:], xe[1:])]
        - csum[np.ix_(ye[:-1], xe[1:])]
        - csum[np.ix_(ye[1:], xe[:-1])]
        + csum[np.ix_(ye[:-1], xe[:-1])]
    )
    area = np.outer(np.diff(ye), np.diff(xe))
    bits = blk * 2 >= area
    if role == "style" and not bits.any() and not mask.is_empty():
        raise MaskTooSmall(
            f"style mask vanished at {grid_h}x{grid_w} feature resolution"
        )
    return DownsampledMask(bits, grid_h, grid_w)


def fuse_attention(
    ahat: AttentionMap,
    pairs: Sequence[tuple[DownsampledMask, DownsampledMask]],
) -> AttentionMap:
    """Inject mask-pair control into a pre-softmax attention map.

    For each pair in order, the rows selected by the content mask are first
    restored to their original input values and then set to -inf on the
    columns outside the style mask. Restoring before masking makes a later
    pair replace, not intersect, an earlier pair's control on shared rows.
    Rows selected by no pair come back bit-identical.
    """
    out = ahat.data.astype(FLOAT)  # fresh writable copy
    orig = ahat.data
    for content_ds, style_ds in pairs:
        if content_ds.spatial_h * content_ds.spatial_w != ahat.rows:
            raise GridMismatch(
                f"content grid {content_ds.spatial_h}x{content_ds.spatial_w} "
                f"does not index {ahat.rows} attention rows"
            )
        if style_ds.spatial_h * style_ds.spatial_w != ahat.cols:
            raise GridMismatch(
                f"style grid {style_ds.spatial_h}x{style_ds.spatial_w} "
                f"does not index {ahat.cols} attention columns"
            )
        if style_ds.is_empty():
            raise EmptyStyleMask("style mask selects no feature cells")
        rows = content_ds.flat()
        if not rows.any():
            continue  # too-small content selection: nothing to control
        cols = ~style_ds.flat()
        out[rows, :] = orig[rows, :]
        if cols.any():
            out[np.ix_(rows, cols)] = NEG_INF
    return AttentionMap(out)


def validate_fusion(ahat: AttentionMap) -> None:
    """Reject maps with an all--inf row, which softmax cannot normalize."""
    dead = np.isneginf(ahat.data).all(axis=1)
    if dead.any():
        raise DegenerateRow(int(np.argmax(dead)))


def global_masked_adain(
    f_c: FeatureMap,
    f_s: FeatureMap,
    pairs: Sequence[tuple[DownsampledMask, DownsampledMask]],
    eps: float = 1e-5,
) -> FeatureMap:
    """Region-paired variant of whole-image statistics transfer.

    Builds one (mean, std) transform per pair from the style cells its
    style mask selects, plus a default transform from all style cells.
    Content cells selected by a pair receive that pair's transform (later
    pairs overwrite earlier ones on overlap); unselected cells receive the
    default. This is the adapter that makes global-transformation style
    transfer methods region-pairable.
    """
    style = f_s.data.astype(np.float64)
    normalized = instance_norm(f_c, eps).data.astype(np.float64)

    def moments(sel: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        cells = style[sel]
        return cells.mean(axis=0), cells.std(axis=0)

    mu_default, sigma_default = moments(np.ones(f_s.positions, dtype=bool))
    owner = np.full(f_c.positions, -1, dtype=np.int64)
    bank: list[tuple[np.ndarray, np.ndarray]] = []
    for i, (content_ds, style_ds) in enumerate(pairs):
        if content_ds.spatial_h * content_ds.spatial_w != f_c.positions:
            raise GridMismatch("content mask grid does not match content features")
        if style_ds.spatial_h * style_ds.spatial_w != f_s.positions:
            raise GridMismatch("style mask grid does not match style features")
        if style_ds.is_empty():
            raise EmptyStyleMask("style mask selects no feature cells")
        bank.append(moments(style_ds.flat()))
        owner[content_ds.flat()] = i

    out = sigma_default * normalized + mu_default
    for i, (mu, sigma) in enumerate(bank):
        sel = owner == i
        if sel.any():
            out[sel] = sigma * normalized[sel] + mu
    return FeatureMap(out.astype(FLOAT), f_c.spatial_h, f_c.spatial_w)


# --- serialization -----------------------------------------------------------

def rle_encode(mask: Mask) -> dict:
    """Row-major run-length encoding, first run counting unset pixels.

    Wire form: {"h": int, "w": int, "runs": [int, ...]}.
    """
    flat = mask.bits.reshape(-1)
    edges = np.flatnonzero(np.diff(flat.view(np.int8)))
    bounds = np.concatenate(([0], edges + 1, [flat.size]))
    runs = np.diff(bounds).tolist()
    if flat[0]:
        runs = [0] + runs
    return {"h": mask.height, "w": mask.width, "runs": runs}


def rle_decode(rle: dict, height: int | None = None, width: int | None = None) -> Mask:
    """Inverse of rle_encode; dims may be overridden by the caller."""
    h = int(rle["h"]) if height is None else height
    w = int(rle["w"]) if width is None else width
    runs = list(rle["runs"])
    if any((not isinstance(r, (int, np.integer))) or r < 0 for r in runs):
        raise LengthMismatch(f"runs must be non-negative integers, got {runs!r}")
    total = sum(runs)
    if total != h * w:
        raise LengthMismatch(f"runs sum to {total}, mask area is {h * w}")
    flat = np.zeros(h * w, dtype=bool)
    pos = 0
    value = False
    for run in runs:
        if value:
            flat[pos : pos + run] = True
        pos += run
        value = not value
    return Mask(flat.reshape(h, w))


def write_mask_png(mask: Mask) -> bytes:
    """8-bit single-channel PNG; set pixels are 255."""
    img = PILImage.fromarray(mask.bits.astype(np.uint8) * 255, mode="L")
    buf = io.BytesIO()
    img.save(buf, format="PNG", compress_level=6)
    return buf.getvalue()


def read_mask_png(data: bytes) -> Mask:
    """Load a mask from PNG bytes; any nonzero sample counts as set."""
    with PILImage.open(io.BytesIO(data)) as img:
        arr = np.asarray(img.convert("L"))
    return Mask(arr != 0)
