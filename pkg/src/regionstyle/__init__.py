"""Region-paired attention style transfer with prompt-driven segmentation."""

from .core import (
    AttentionMap,
    Conv1x1Params,
    FeatureMap,
    Image,
    conv1x1,
    instance_norm,
    matmul,
    softmax_rows,
)
from .codec import (
    ConvLayer,
    DecoderParams,
    EncoderParams,
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
from .masks import (
    DownsampledMask,
    Mask,
    MaskPair,
    MaskPairSet,
    downsample_mask,
    fuse_attention,
    global_masked_adain,
    read_mask_png,
    rle_decode,
    rle_encode,
    validate_fusion,
    write_mask_png,
)
from .stylizer import (
    AttentionStats,
    adaattn_statistics,
    project_qkv,
    raw_attention,
    stylize,
    stylize_feature,
)
from .segmenter import (
    PromptBox,
    PromptPoint,
    PromptSet,
    RemoteSegmenter,
    SegmenterConfig,
    prompts_from_json,
    prompts_to_json,
    refine,
    remote_segment,
    segment,
    warmup,
)
from .pngio import read_png, write_png
from .service import create_app
from . import errors

__version__ = "0.1.0"

__all__ = [
    "AttentionMap",
    "AttentionStats",
    "Conv1x1Params",
    "ConvLayer",
    "DecoderParams",
    "DownsampledMask",
    "EncoderParams",
    "FeatureMap",
    "Image",
    "Mask",
    "MaskPair",
    "MaskPairSet",
    "ModelParams",
    "PoolLayer",
    "PromptBox",
    "PromptPoint",
    "PromptSet",
    "ReluLayer",
    "RemoteSegmenter",
    "SegmenterConfig",
    "UpsampleLayer",
    "adaattn_statistics",
    "conv1x1",
    "create_app",
    "decode",
    "downsample_mask",
    "encode",
    "errors",
    "fuse_attention",
    "global_masked_adain",
    "identity_model",
    "instance_norm",
    "load_weights",
    "from_bytes",
    "to_bytes",
    "matmul",
    "project_qkv",
    "prompts_from_json",
    "prompts_to_json",
    "raw_attention",
    "read_mask_png",
    "read_png",
    "refine",
    "remote_segment",
    "rle_decode",
    "rle_encode",
    "save_weights",
    "segment",
    "warmup",
    "softmax_rows",
    "stylize",
    "stylize_feature",
    "toy_model",
    "validate_fusion",
    "vgg19_relu4_1_model",
    "write_mask_png",
    "write_png",
]
