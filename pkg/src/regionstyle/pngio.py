"""Pinned PNG encoding for RGB images.

Byte-level reproducibility matters: the CLI and the HTTP service must
produce identical files for identical inputs, and tests compare outputs
by digest. Everything is therefore fixed: 8-bit RGB, no interlace, zlib
level 6, values quantized with round-half-to-even.
"""

from __future__ import annotations

import io

import numpy as np
from PIL import Image as PILImage

from .core import Image
from .errors import BadImage


def write_png(image: Image) -> bytes:
    quantized = np.clip(np.rint(image.data * 255.0), 0, 255).astype(np.uint8)
    pil = PILImage.fromarray(quantized, mode="RGB")
    buf = io.BytesIO()
    pil.save(buf, format="PNG", optimize=False, compress_level=6)
    return buf.getvalue()


def read_png(data: bytes) -> Image:
    try:
        with PILImage.open(io.BytesIO(data)) as pil:
            rgb = pil.convert("RGB")
            arr = np.asarray(rgb, dtype=np.uint8)
    except Exception as exc:
        raise BadImage(f"bytes do not decode as an image: {exc}") from exc
    return Image(arr.astype(np.float32) / 255.0)
