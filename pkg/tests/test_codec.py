"""Feature codec: conv stack, pooling, upsampling, and the weight container."""

import struct
import zlib

import numpy as np
import pytest

from regionstyle import (
    ConvLayer,
    DecoderParams,
    EncoderParams,
    FeatureMap,
    Image,
    ModelParams,
    PoolLayer,
    ReluLayer,
    UpsampleLayer,
    decode,
    encode,
    from_bytes,
    identity_model,
    load_weights,
    save_weights,
    to_bytes,
    toy_model,
    vgg19_relu4_1_model,
)
from regionstyle.errors import (
    ChannelMismatch,
    ChecksumError,
    FormatError,
    ImageTooSmall,
    ShapeError,
)
from regionstyle.codec import _conv2d, _maxpool2x2, _apply_layer
from regionstyle.core import Conv1x1Params

from oracles import naive_conv2d


def conv(out_ch, in_ch, k, rng=None, fill=None):
    if fill is not None:
        w = np.full((out_ch, in_ch, k, k), fill, dtype=np.float32)
        b = np.zeros(out_ch, dtype=np.float32)
    else:
        w = rng.randn(out_ch, in_ch, k, k).astype(np.float32) * 0.2
        b = rng.randn(out_ch).astype(np.float32) * 0.1
    return ConvLayer(w, b)


# --- primitive layers ---------------------------------------------------------

class TestConv2d:
    def test_center_tap_identity(self):
        rng = np.random.RandomState(0)
        x = rng.randn(6, 5, 3).astype(np.float32)
        w = np.zeros((3, 3, 3, 3), dtype=np.float32)
        for c in range(3):
            w[c, c, 1, 1] = 1.0
        layer = ConvLayer(w, np.zeros(3, dtype=np.float32))
        np.testing.assert_array_equal(_conv2d(x, layer), x)

    def test_bias_only(self):
        x = np.zeros((4, 4, 2), dtype=np.float32)
        layer = ConvLayer(
            np.zeros((3, 2, 1, 1), dtype=np.float32),
            np.array([0.1, -0.2, 0.3], dtype=np.float32),
        )
        out = _conv2d(x, layer)
        np.testing.assert_allclose(out, np.broadcast_to([0.1, -0.2, 0.3], (4, 4, 3)), atol=1e-7)

    def test_ramp_matches_loop_oracle(self):
        """3x3 kernel over a linear ramp exercises the mirrored border."""
        x = np.arange(25, dtype=np.float32).reshape(5, 5, 1) / 25.0
        rng = np.random.RandomState(1)
        layer = conv(2, 1, 3, rng)
        got = _conv2d(x, layer)
        expected = naive_conv2d(x, layer.weight, layer.bias)
        np.testing.assert_allclose(got, expected, atol=1e-5)
        assert got.shape == (5, 5, 2)

    def test_random_shapes_match_loop_oracle(self):
        rng = np.random.RandomState(2)
        for _ in range(12):
            h, w = rng.randint(3, 9), rng.randint(3, 9)
            cin, cout = rng.randint(1, 5), rng.randint(1, 5)
            k = rng.choice([1, 3, 5])
            x = rng.randn(h, w, cin).astype(np.float32)
            layer = conv(cout, cin, k, rng)
            np.testing.assert_allclose(
                _conv2d(x, layer),
                naive_conv2d(x, layer.weight, layer.bias),
                atol=1e-5,
            )

    def test_constant_input_ignores_padding(self):
        # reflection of a constant is the same constant, so a box filter
        # returns k*k*value everywhere including the border
        x = np.full((4, 4, 1), 0.5, dtype=np.float32)
        layer = conv(1, 1, 3, fill=1.0)
        np.testing.assert_allclose(_conv2d(x, layer), np.full((4, 4, 1), 4.5), atol=1e-5)


class TestPoolAndUpsample:
    def test_pool_even_blocks(self):
        x = np.array(
            [[1, 2, 5, 6], [3, 4, 7, 8], [9, 1, 2, 2], [1, 1, 3, 4]],
            dtype=np.float32,
        ).reshape(4, 4, 1)
        out = _maxpool2x2(x)
        np.testing.assert_array_equal(out.reshape(2, 2), [[4, 8], [9, 4]])

    def test_pool_odd_dims_replicate_edge(self):
        x = np.array([[1, 2], [3, 4], [5, 6]], dtype=np.float32).reshape(3, 2, 1)
        out = _maxpool2x2(x)
        np.testing.assert_array_equal(out.reshape(2, 1), [[4], [6]])

    def test_upsample_nearest_doubles(self):
        x = np.array([[1, 2], [3, 4]], dtype=np.float32).reshape(2, 2, 1)
        out = _apply_layer(x, UpsampleLayer())
        expected = np.array(
            [[1, 1, 2, 2], [1, 1, 2, 2], [3, 3, 4, 4], [3, 3, 4, 4]],
            dtype=np.float32,
        ).reshape(4, 4, 1)
        np.testing.assert_array_equal(out, expected)

    def test_relu_clips_negative(self):
        x = np.array([[-1.0, 2.0]], dtype=np.float32).reshape(1, 2, 1)
        out = _apply_layer(x, ReluLayer())
        np.testing.assert_array_equal(out.reshape(-1), [0.0, 2.0])


# --- parameter containers ---------------------------------------------------------

class TestParamValidation:
    def test_even_kernel_rejected(self):
        with pytest.raises(ValueError):
            ConvLayer(np.zeros((1, 1, 2, 2), dtype=np.float32), np.zeros(1, dtype=np.float32))

    def test_non_finite_rejected(self):
        w = np.zeros((1, 1, 1, 1), dtype=np.float32)
        w[0, 0, 0, 0] = np.inf
        with pytest.raises(ValueError):
            ConvLayer(w, np.zeros(1, dtype=np.float32))

    def test_bias_length_must_match(self):
        with pytest.raises(ValueError):
            ConvLayer(np.zeros((2, 1, 1, 1), dtype=np.float32), np.zeros(3, dtype=np.float32))

    def test_downsample_must_match_pool_count(self):
        rng = np.random.RandomState(3)
        layers = (conv(4, 3, 3, rng), ReluLayer(), PoolLayer())
        EncoderParams(layers, 2, 4)
        with pytest.raises(ValueError):
            EncoderParams(layers, 4, 4)

    def test_channel_walk_must_be_consistent(self):
        rng = np.random.RandomState(4)
        layers = (conv(4, 3, 3, rng), conv(8, 5, 3, rng))  # 4 -> 5 break
        with pytest.raises(ChannelMismatch):
            EncoderParams(layers, 1, 8)

    def test_projection_channels_must_match_encoder(self):
        m = identity_model()
        with pytest.raises(ChannelMismatch):
            ModelParams(m.encoder, m.decoder, Conv1x1Params.identity(4), m.key, m.value)

    def test_encoder_rejects_upsample(self):
        with pytest.raises(ValueError):
            EncoderParams((UpsampleLayer(),), 1, 3)


# --- encode / decode ----------------------------------------------------------------

class TestEncode:
    def test_identity_is_flatten(self):
        rng = np.random.RandomState(5)
        img = Image(rng.rand(4, 6, 3).astype(np.float32))
        fmap = encode(img, identity_model().encoder)
        assert (fmap.spatial_h, fmap.spatial_w, fmap.channels) == (4, 6, 3)
        np.testing.assert_array_equal(fmap.data, img.data.reshape(24, 3))

    def test_toy_shape_contract(self):
        rng = np.random.RandomState(6)
        img = Image(rng.rand(64, 64, 3).astype(np.float32))
        fmap = encode(img, toy_model(0).encoder)
        assert (fmap.spatial_h, fmap.spatial_w, fmap.channels) == (16, 16, 16)

    def test_ceil_grid_on_ragged_input(self):
        rng = np.random.RandomState(7)
        img = Image(rng.rand(5, 7, 3).astype(np.float32))
        fmap = encode(img, toy_model(0).encoder)
        assert (fmap.spatial_h, fmap.spatial_w) == (2, 2)

    def test_too_small_input_rejected(self):
        rng = np.random.RandomState(8)
        img = Image(rng.rand(3, 8, 3).astype(np.float32))
        with pytest.raises(ImageTooSmall):
            encode(img, toy_model(0).encoder)

    def test_deterministic(self):
        rng = np.random.RandomState(9)
        img = Image(rng.rand(16, 16, 3).astype(np.float32))
        enc = toy_model(0).encoder
        a = encode(img, enc)
        b = encode(img, enc)
        np.testing.assert_array_equal(a.data, b.data)


class TestDecode:
    def test_identity_round_trip(self):
        rng = np.random.RandomState(10)
        img = Image(rng.rand(4, 6, 3).astype(np.float32))
        m = identity_model()
        out = decode(encode(img, m.encoder), m.decoder, 4, 6)
        np.testing.assert_array_equal(out.data, img.data)

    def test_zero_weights_bias_half_gives_flat_gray(self):
        dec = DecoderParams(
            (ConvLayer(
                np.zeros((3, 3, 1, 1), dtype=np.float32),
                np.full(3, 0.5, dtype=np.float32),
            ),),
        )
        fmap = FeatureMap(np.random.RandomState(11).randn(6, 3).astype(np.float32), 2, 3)
        out = decode(fmap, dec, 2, 3)
        np.testing.assert_array_equal(out.data, np.full((2, 3, 3), 0.5, dtype=np.float32))

    def test_output_clamped_to_unit_range(self):
        dec = DecoderParams(
            (ConvLayer(
                np.zeros((3, 3, 1, 1), dtype=np.float32),
                np.array([-1.0, 0.5, 2.0], dtype=np.float32),
            ),),
        )
        fmap = FeatureMap(np.zeros((4, 3), dtype=np.float32), 2, 2)
        out = decode(fmap, dec, 2, 2)
        np.testing.assert_array_equal(out.data[0, 0], [0.0, 0.5, 1.0])

    def test_crop_matches_requested_dims(self):
        rng = np.random.RandomState(12)
        img = Image(rng.rand(5, 7, 3).astype(np.float32))
        m = toy_model(0)
        out = decode(encode(img, m.encoder), m.decoder, 5, 7)
        assert out.data.shape == (5, 7, 3)

    def test_wrong_channel_count_rejected(self):
        m = toy_model(0)
        fmap = FeatureMap(np.zeros((4, 8), dtype=np.float32), 2, 2)
        with pytest.raises(ChannelMismatch):
            decode(fmap, m.decoder, 8, 8)

    def test_oversized_target_rejected(self):
        m = identity_model()
        fmap = FeatureMap(np.zeros((4, 3), dtype=np.float32), 2, 2)
        with pytest.raises(Exception):
            decode(fmap, m.decoder, 9, 9)


# --- weight container ------------------------------------------------------------

def first_tensor_dims_offset(buf):
    """Offset of the first tensor's first dim word: header is 12 bytes,
    then u16 name length + name + u8 rank."""
    (name_len,) = struct.unpack_from("<H", buf, 12)
    return 12 + 2 + name_len + 1


def reseal(buf_without_crc):
    return buf_without_crc + struct.pack("<I", zlib.crc32(buf_without_crc))


class TestWeightContainer:
    @pytest.mark.parametrize("maker", [identity_model, lambda: toy_model(3)])
    def test_round_trip_bit_exact(self, maker):
        params = maker()
        again = from_bytes(to_bytes(params))
        assert to_bytes(again) == to_bytes(params)
        for a, b in zip(params.encoder.layers, again.encoder.layers):
            if isinstance(a, ConvLayer):
                np.testing.assert_array_equal(a.weight, b.weight)
                np.testing.assert_array_equal(a.bias, b.bias)
        np.testing.assert_array_equal(params.query.weight, again.query.weight)
        np.testing.assert_array_equal(params.value.bias, again.value.bias)

    def test_file_round_trip(self, tmp_path):
        params = toy_model(5)
        path = tmp_path / "weights.nstw"
        save_weights(params, path)
        again = load_weights(path)
        assert to_bytes(again) == to_bytes(params)

    def test_seed_survives_round_trip(self):
        assert from_bytes(to_bytes(toy_model(7))).seed == 7
        assert from_bytes(to_bytes(identity_model())).seed is None

    def test_vgg_topology_round_trips(self):
        params = vgg19_relu4_1_model(0)
        assert params.encoder.channels == 512
        assert params.encoder.downsample == 8
        again = from_bytes(to_bytes(params))
        assert again.encoder.channels == 512
        assert to_bytes(again) == to_bytes(params)

    def test_layer_structure_preserved(self):
        params = toy_model(0)
        again = from_bytes(to_bytes(params))
        assert [type(l).__name__ for l in again.encoder.layers] == \
            [type(l).__name__ for l in params.encoder.layers]
        assert [type(l).__name__ for l in again.decoder.layers] == \
            [type(l).__name__ for l in params.decoder.layers]


class TestWeightContainerErrors:
    def test_truncated_header(self):
        buf = to_bytes(identity_model())
        for cut in (0, 3, 8, 11):
            with pytest.raises(FormatError):
                from_bytes(buf[:cut])

    def test_truncated_mid_stream(self):
        buf = to_bytes(toy_model(0))
        with pytest.raises((FormatError, ShapeError)):
            from_bytes(buf[: len(buf) // 2])

    def test_bad_magic(self):
        buf = to_bytes(identity_model())
        with pytest.raises(FormatError):
            from_bytes(b"WXYZ" + buf[4:])

    def test_unsupported_version(self):
        buf = bytearray(to_bytes(identity_model()))
        struct.pack_into("<I", buf, 4, 2)
        with pytest.raises(FormatError):
            from_bytes(bytes(buf))

    def test_trailing_garbage(self):
        buf = to_bytes(identity_model())
        with pytest.raises(FormatError):
            from_bytes(buf + b"\x00")

    def test_inflated_dim_is_shape_error(self):
        # claim a huge first dim: headers still parse, payload cannot fit
        buf = bytearray(to_bytes(identity_model()))
        struct.pack_into("<I", buf, first_tensor_dims_offset(buf), 1 << 20)
        with pytest.raises(ShapeError):
            from_bytes(bytes(buf))

    def test_payload_flip_is_checksum_error(self):
        buf = bytearray(to_bytes(toy_model(0)))
        buf[-5] ^= 0xFF  # last payload byte, headers untouched
        with pytest.raises(ChecksumError):
            from_bytes(bytes(buf))

    def test_unknown_tensor_name_rejected(self):
        name = b"enc.00.mystery"
        body = struct.pack("<4sII", b"NSTW", 1, 1)
        body += struct.pack("<H", len(name)) + name
        body += struct.pack("<B", 1) + struct.pack("<I", 1)
        body += struct.pack("<f", 0.0)
        with pytest.raises(FormatError):
            from_bytes(reseal(body))

    def test_wrong_rank_for_known_name_rejected(self):
        name = b"proj.query.weight"
        body = struct.pack("<4sII", b"NSTW", 1, 1)
        body += struct.pack("<H", len(name)) + name
        body += struct.pack("<B", 1) + struct.pack("<I", 2)
        body += struct.pack("<ff", 1.0, 0.0)
        with pytest.raises((FormatError, ShapeError)):
            from_bytes(reseal(body))

    def test_checksum_checked_after_parse(self):
        # both defects present: the shape defect must win
        buf = bytearray(to_bytes(identity_model()))
        struct.pack_into("<I", buf, first_tensor_dims_offset(buf), 1 << 20)
        buf[-1] ^= 0xFF
        with pytest.raises(ShapeError):
            from_bytes(bytes(buf))


class TestBuilders:
    def test_toy_seed_changes_weights(self):
        a = toy_model(0)
        b = toy_model(1)
        assert not np.array_equal(a.encoder.layers[0].weight, b.encoder.layers[0].weight)

    def test_toy_same_seed_is_reproducible(self):
        a, b = toy_model(4), toy_model(4)
        assert to_bytes(a) == to_bytes(b)

    def test_identity_projections_are_identity(self):
        m = identity_model()
        np.testing.assert_array_equal(m.query.weight, np.eye(3, dtype=np.float32))
        np.testing.assert_array_equal(m.query.bias, np.zeros(3, dtype=np.float32))
