"""Image encoder, symmetric decoder, and the NSTW weight container.

The encoder is a stack of stride-1 reflection-padded convolutions, ReLUs
and ceil-mode 2x2 max pools; the decoder mirrors it with nearest-neighbor
2x upsampling in place of each pool. Weight files are bit-exact: saving a
loaded model reproduces the file byte for byte.

Published VGG/AdaAttN checkpoints can be converted into this container
offline (tensor-by-tensor export into the builders' layer layout); the
repository itself ships only seeded toy and identity configurations.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core import FLOAT, Conv1x1Params, FeatureMap, Image
from .errors import (
    ChannelMismatch,
    ChecksumError,
    DimensionMismatch,
    FormatError,
    ImageTooSmall,
    ShapeError,
)


# --- layers -------------------------------------------------------------------

@dataclass(frozen=True)
class ConvLayer:
    """k x k convolution, stride 1, reflection padding, odd k."""

    weight: np.ndarray  # (out, in, k, k)
    bias: np.ndarray    # (out,)

    def __post_init__(self):
        w = np.array(self.weight, dtype=FLOAT)
        b = np.array(self.bias, dtype=FLOAT)
        if w.ndim != 4 or w.shape[2] != w.shape[3] or w.shape[2] % 2 != 1:
            raise ValueError(f"conv weight must be (out, in, k, k) with odd k, got {w.shape}")
        if b.shape != (w.shape[0],):
            raise ValueError(f"conv bias {b.shape} does not match {w.shape[0]} outputs")
        if not (np.isfinite(w).all() and np.isfinite(b).all()):
            raise ValueError("conv parameters contain non-finite values")
        w.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "bias", b)

    @property
    def in_channels(self) -> int:
        return self.weight.shape[1]

    @property
    def out_channels(self) -> int:
        return self.weight.shape[0]

    @property
    def kernel(self) -> int:
        return self.weight.shape[2]


@dataclass(frozen=True)
class ReluLayer:
    pass


@dataclass(frozen=True)
class PoolLayer:
    """2x2 max pool, stride 2, ceil mode (ragged edges keep a partial block)."""


@dataclass(frozen=True)
class UpsampleLayer:
    """Nearest-neighbor 2x upsampling."""


Layer = ConvLayer | ReluLayer | PoolLayer | UpsampleLayer


def _walk_channels(layers: tuple, start: int) -> int:
    ch = start
    for layer in layers:
        if isinstance(layer, ConvLayer):
            if layer.in_channels != ch:
                raise ChannelMismatch(
                    f"conv expects {layer.in_channels} channels, gets {ch}"
                )
            ch = layer.out_channels
    return ch


def _apply_layer(x: np.ndarray, layer: Layer) -> np.ndarray:
    if isinstance(layer, ConvLayer):
        return _conv2d(x, layer)
    if isinstance(layer, ReluLayer):
        return np.maximum(x, 0.0)
    if isinstance(layer, PoolLayer):
        return _maxpool2x2(x)
    if isinstance(layer, UpsampleLayer):
        return np.repeat(np.repeat(x, 2, axis=0), 2, axis=1)
    raise TypeError(f"unknown layer {layer!r}")


def _conv2d(x: np.ndarray, layer: ConvLayer) -> np.ndarray:
    pad = (layer.kernel - 1) // 2
    if pad:
        x = np.pad(x, ((pad, pad), (pad, pad), (0, 0)), mode="reflect")
    k = layer.kernel
    windows = sliding_window_view(x, (k, k), axis=(0, 1))  # (H, W, C, k, k)
    h, w = windows.shape[0], windows.shape[1]
    cols = windows.reshape(h * w, -1).astype(np.float64)
    kernel = layer.weight.reshape(layer.out_channels, -1).astype(np.float64)
    out = cols @ kernel.T + layer.bias.astype(np.float64)
    return out.reshape(h, w, layer.out_channels).astype(FLOAT)


def _maxpool2x2(x: np.ndarray) -> np.ndarray:
    h, w, c = x.shape
    # Edge-replicate to even size; the duplicate never changes a block max.
    if h % 2:
        x = np.concatenate([x, x[-1:, :, :]], axis=0)
    if w % 2:
        x = np.concatenate([x, x[:, -1:, :]], axis=1)
    h2, w2 = x.shape[0] // 2, x.shape[1] // 2
    return x.reshape(h2, 2, w2, 2, c).max(axis=(1, 3))


# --- parameter bundles ---------------------------------------------------------

@dataclass(frozen=True)
class EncoderParams:
    """Layer stack mapping an H x W image to a ceil(H/d) x ceil(W/d) x f grid."""

    layers: tuple[Layer, ...]
    downsample: int
    channels: int

    def __post_init__(self):
        layers = tuple(self.layers)
        object.__setattr__(self, "layers", layers)
        if any(isinstance(g, UpsampleLayer) for g in layers):
            raise ValueError("encoder cannot contain upsampling layers")
        pools = sum(isinstance(g, PoolLayer) for g in layers)
        if self.downsample != 2 ** pools:
            raise ValueError(
                f"declared downsample {self.downsample} != 2^{pools} pools"
            )
        if _walk_channels(layers, 3) != self.channels:
            raise ChannelMismatch(
                f"encoder layers produce {_walk_channels(layers, 3)} channels, "
                f"declared {self.channels}"
            )


@dataclass(frozen=True)
class DecoderParams:
    """Mirror stack mapping an h x w x f grid back to an image."""

    layers: tuple[Layer, ...]

    def __post_init__(self):
        layers = tuple(self.layers)
        object.__setattr__(self, "layers", layers)
        if any(isinstance(g, PoolLayer) for g in layers):
            raise ValueError("decoder cannot contain pooling layers")

    @property
    def upsample(self) -> int:
        return 2 ** sum(isinstance(g, UpsampleLayer) for g in self.layers)

    @property
    def in_channels(self) -> int:
        for layer in self.layers:
            if isinstance(layer, ConvLayer):
                return layer.in_channels
        return 3  # identity decoder passes the feature straight through

    def out_channels(self, feature_channels: int) -> int:
        ch = feature_channels
        for layer in self.layers:
            if isinstance(layer, ConvLayer):
                ch = layer.out_channels
        return ch


@dataclass(frozen=True)
class ModelParams:
    """Encoder, decoder and the three attention projections as one unit."""

    encoder: EncoderParams
    decoder: DecoderParams
    query: Conv1x1Params
    key: Conv1x1Params
    value: Conv1x1Params
    seed: int | None = None

    def __post_init__(self):
        f = self.encoder.channels
        for name in ("query", "key", "value"):
            proj: Conv1x1Params = getattr(self, name)
            if proj.in_channels != f:
                raise ChannelMismatch(
                    f"{name} projection expects {proj.in_channels} channels, "
                    f"encoder produces {f}"
                )


# --- encode / decode ------------------------------------------------------------

def encode(image: Image, params: EncoderParams) -> FeatureMap:
    """Run the encoder stack and flatten the grid row-major."""
    d = params.downsample
    if image.height < d or image.width < d:
        raise ImageTooSmall(
            f"{image.height}x{image.width} image cannot feed a "
            f"downsample-{d} encoder"
        )
    x = image.data
    for layer in params.layers:
        x = _apply_layer(x, layer)
    h, w, f = x.shape
    return FeatureMap(x.reshape(h * w, f), h, w)


def decode(
    fmap: FeatureMap, params: DecoderParams, target_h: int, target_w: int
) -> Image:
    """Run the decoder stack, clamp to [0, 1] and crop to the target size."""
    if params.in_channels != fmap.channels:
        raise ChannelMismatch(
            f"decoder expects {params.in_channels} channels, "
            f"feature map has {fmap.channels}"
        )
    if params.out_channels(fmap.channels) != 3:
        raise ChannelMismatch("decoder does not produce 3 channels")
    x = fmap.grid()
    for layer in params.layers:
        x = _apply_layer(x, layer)
    if x.shape[0] < target_h or x.shape[1] < target_w:
        raise DimensionMismatch(
            f"decoded {x.shape[0]}x{x.shape[1]} cannot cover "
            f"target {target_h}x{target_w}"
        )
    x = np.clip(x, 0.0, 1.0)
    return Image(x[:target_h, :target_w, :])


# --- seeded configurations -------------------------------------------------------

def identity_model() -> ModelParams:
    """d=1, f=3 pass-through: features are the flattened image values."""
    return ModelParams(
        encoder=EncoderParams(layers=(), downsample=1, channels=3),
        decoder=DecoderParams(layers=()),
        query=Conv1x1Params.identity(3),
        key=Conv1x1Params.identity(3),
        value=Conv1x1Params.identity(3),
    )


def _seeded_conv(rng: np.random.Generator, cin: int, cout: int, k: int) -> ConvLayer:
    scale = 1.0 / np.sqrt(cin * k * k)
    weight = rng.normal(0.0, scale, size=(cout, cin, k, k))
    bias = rng.normal(0.0, 0.05, size=cout)
    return ConvLayer(weight, bias)


def _seeded_proj(rng: np.random.Generator, f: int) -> Conv1x1Params:
    return Conv1x1Params(
        rng.normal(0.0, 1.0 / np.sqrt(f), size=(f, f)),
        rng.normal(0.0, 0.05, size=f),
    )


def toy_model(seed: int = 0) -> ModelParams:
    """Default toy config: two stride-halving stages, d=4, f=16."""
    rng = np.random.default_rng(seed)
    encoder = EncoderParams(
        layers=(
            _seeded_conv(rng, 3, 8, 3),
            ReluLayer(),
            PoolLayer(),
            _seeded_conv(rng, 8, 16, 3),
            ReluLayer(),
            PoolLayer(),
        ),
        downsample=4,
        channels=16,
    )
    decoder = DecoderParams(
        layers=(
            UpsampleLayer(),
            _seeded_conv(rng, 16, 8, 3),
            ReluLayer(),
            UpsampleLayer(),
            _seeded_conv(rng, 8, 3, 3),
        )
    )
    return ModelParams(
        encoder=encoder,
        decoder=decoder,
        query=_seeded_proj(rng, 16),
        key=_seeded_proj(rng, 16),
        value=_seeded_proj(rng, 16),
        seed=seed,
    )


def vgg19_relu4_1_model(seed: int = 0) -> ModelParams:
    """Production-shaped topology (d=8, f=512) with seeded weights.

    Matches the conv/pool layout of VGG-19 up to relu4_1. Real checkpoint
    weights are converted into this layout offline; the seeded weights here
    exist so the full-size path can be exercised without that conversion.
    """
    rng = np.random.default_rng(seed)
    widths = [(3, 64), (64, 64), None, (64, 128), (128, 128), None,
              (128, 256), (256, 256), (256, 256), (256, 256), None,
              (256, 512)]
    enc_layers: list[Layer] = []
    for spec_w in widths:
        if spec_w is None:
            enc_layers.append(PoolLayer())
        else:
            enc_layers.append(_seeded_conv(rng, spec_w[0], spec_w[1], 3))
            enc_layers.append(ReluLayer())
    dec_widths = [(512, 256), None, (256, 256), (256, 128), None,
                  (128, 128), (128, 64), None, (64, 64), (64, 3)]
    dec_layers: list[Layer] = []
    for spec_w in dec_widths:
        if spec_w is None:
            dec_layers.append(UpsampleLayer())
        else:
            dec_layers.append(_seeded_conv(rng, spec_w[0], spec_w[1], 3))
            if spec_w[1] != 3:
                dec_layers.append(ReluLayer())
    return ModelParams(
        encoder=EncoderParams(tuple(enc_layers), downsample=8, channels=512),
        decoder=DecoderParams(tuple(dec_layers)),
        query=_seeded_proj(rng, 512),
        key=_seeded_proj(rng, 512),
        value=_seeded_proj(rng, 512),
        seed=seed,
    )


# --- NSTW weight container --------------------------------------------------------
#
# magic "NSTW" | u32 version=1 | u32 tensor count
# per tensor: u16 name length | name UTF-8 | u8 rank | rank x u32 dims
#             | prod(dims) x f32, row-major
# trailer: u32 CRC-32 of all preceding bytes
# All integers little-endian.

_MAGIC = b"NSTW"
_VERSION = 1


def _named_tensors(params: ModelParams) -> list[tuple[str, np.ndarray]]:
    """Flatten a model into the fixed, order-stable tensor listing."""
    marker = np.zeros(0, dtype=FLOAT)
    out: list[tuple[str, np.ndarray]] = []

    def emit_stack(prefix: str, layers: tuple[Layer, ...]):
        for i, layer in enumerate(layers):
            if isinstance(layer, ConvLayer):
                out.append((f"{prefix}.{i:02d}.conv.weight", layer.weight))
                out.append((f"{prefix}.{i:02d}.conv.bias", layer.bias))
            elif isinstance(layer, ReluLayer):
                out.append((f"{prefix}.{i:02d}.relu", marker))
            elif isinstance(layer, PoolLayer):
                out.append((f"{prefix}.{i:02d}.pool", marker))
            elif isinstance(layer, UpsampleLayer):
                out.append((f"{prefix}.{i:02d}.up", marker))

    emit_stack("enc", params.encoder.layers)
    emit_stack("dec", params.decoder.layers)
    for name in ("query", "key", "value"):
        proj: Conv1x1Params = getattr(params, name)
        out.append((f"proj.{name}.weight", proj.weight))
        out.append((f"proj.{name}.bias", proj.bias))
    if params.seed is not None:
        out.append(("meta.seed", np.array([params.seed], dtype=FLOAT)))
    return out


def save_weights(params: ModelParams, path: str | Path) -> None:
    Path(path).write_bytes(to_bytes(params))


def to_bytes(params: ModelParams) -> bytes:
    tensors = _named_tensors(params)
    parts = [_MAGIC, struct.pack("<II", _VERSION, len(tensors))]
    for name, arr in tensors:
        raw = name.encode("utf-8")
        arr = np.ascontiguousarray(arr, dtype=FLOAT)
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.astype("<f4").tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def load_weights(path: str | Path) -> ModelParams:
    return from_bytes(Path(path).read_bytes())


def from_bytes(buf: bytes) -> ModelParams:
    tensors = _parse_tensors(buf)
    return _assemble(dict(tensors), [name for name, _ in tensors])


def _parse_tensors(buf: bytes) -> list[tuple[str, np.ndarray]]:
    if len(buf) < 16 or buf[:4] != _MAGIC:
        raise FormatError("not an NSTW file (bad magic or truncated header)")
    version, count = struct.unpack_from("<II", buf, 4)
    if version != _VERSION:
        raise FormatError(f"unsupported NSTW version {version}")
    limit = len(buf) - 4  # bytes available before the CRC trailer
    pos = 12
    tensors: list[tuple[str, np.ndarray]] = []
    for _ in range(count):
        if pos + 2 > limit:
            raise FormatError("truncated tensor header")
        (name_len,) = struct.unpack_from("<H", buf, pos)
        pos += 2
        if pos + name_len + 1 > limit:
            raise FormatError("truncated tensor name")
        name = buf[pos : pos + name_len].decode("utf-8")
        pos += name_len
        rank = buf[pos]
        pos += 1
        if pos + 4 * rank > limit:
            raise FormatError("truncated tensor dims")
        dims = struct.unpack_from(f"<{rank}I", buf, pos)
        pos += 4 * rank
        need = 4 * int(np.prod(dims, dtype=np.int64)) if rank else 4
        if pos + need > limit:
            raise ShapeError(
                f"tensor {name!r} declares {dims}, only "
                f"{limit - pos} bytes of data remain"
            )
        arr = np.frombuffer(buf, dtype="<f4", count=need // 4, offset=pos)
        pos += need
        tensors.append((name, arr.reshape(dims).astype(FLOAT)))
    if pos != limit:
        raise FormatError(f"{limit - pos} unexpected bytes after last tensor")
    (crc_stored,) = struct.unpack_from("<I", buf, limit)
    if zlib.crc32(buf[:limit]) != crc_stored:
        raise ChecksumError("CRC-32 mismatch")
    return tensors


def _assemble(by_name: dict[str, np.ndarray], order: list[str]) -> ModelParams:
    def build_stack(prefix: str) -> tuple[Layer, ...]:
        entries: dict[int, dict[str, np.ndarray]] = {}
        for name in order:
            if not name.startswith(prefix + "."):
                continue
            parts = name.split(".")
            try:
                idx = int(parts[1])
            except (IndexError, ValueError):
                raise FormatError(f"malformed tensor name {name!r}")
            entries.setdefault(idx, {})[".".join(parts[2:])] = by_name[name]
        layers: list[Layer] = []
        for idx in range(len(entries)):
            if idx not in entries:
                raise FormatError(f"{prefix} layer indices are not consecutive")
            entry = entries[idx]
            keys = sorted(entry)
            if keys == ["conv.bias", "conv.weight"]:
                w, b = entry["conv.weight"], entry["conv.bias"]
                if w.ndim != 4 or b.ndim != 1 or b.shape[0] != w.shape[0]:
                    raise ShapeError(
                        f"{prefix}.{idx:02d} conv tensors have shapes "
                        f"{w.shape} / {b.shape}"
                    )
                layers.append(ConvLayer(w, b))
            elif keys == ["relu"]:
                layers.append(ReluLayer())
            elif keys == ["pool"]:
                layers.append(PoolLayer())
            elif keys == ["up"]:
                layers.append(UpsampleLayer())
            else:
                raise FormatError(f"unknown layer tensors {keys} at {prefix}.{idx}")
        return tuple(layers)

    known = {n for n in order if n.startswith(("enc.", "dec."))}
    known |= {
        f"proj.{p}.{t}" for p in ("query", "key", "value") for t in ("weight", "bias")
    }
    known.add("meta.seed")
    unknown = [n for n in order if n not in known]
    if unknown:
        raise FormatError(f"unknown tensors {unknown}")

    enc_layers = build_stack("enc")
    dec_layers = build_stack("dec")
    pools = sum(isinstance(g, PoolLayer) for g in enc_layers)

    def proj(which: str) -> Conv1x1Params:
        try:
            w = by_name[f"proj.{which}.weight"]
            b = by_name[f"proj.{which}.bias"]
        except KeyError:
            raise FormatError(f"missing {which} projection tensors")
        if w.ndim != 2 or b.ndim != 1 or b.shape[0] != w.shape[0]:
            raise ShapeError(
                f"{which} projection tensors have shapes {w.shape} / {b.shape}"
            )
        return Conv1x1Params(w, b)

    seed_arr = by_name.get("meta.seed")
    seed = int(seed_arr[0]) if seed_arr is not None and seed_arr.size else None
    try:
        encoder = EncoderParams(
            layers=enc_layers,
            downsample=2 ** pools,
            channels=_walk_channels(enc_layers, 3),
        )
        decoder = DecoderParams(layers=dec_layers)
        return ModelParams(
            encoder=encoder,
            decoder=decoder,
            query=proj("query"),
            key=proj("key"),
            value=proj("value"),
            seed=seed,
        )
    except (ChannelMismatch, ValueError) as exc:
        raise ShapeError(f"inconsistent model tensors: {exc}") from exc
