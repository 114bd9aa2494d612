"""Prompt-driven segmentation: labeled points, boxes, contours.

The point path is seeded region growing: every foreground point grows its
own 4-connected region (breadth-first, admitting a pixel when its RGB
distance to the region's running mean is at most tau), background points
grow the same way, and the mask is the foreground union minus the
background union, clipped to the box when one is given. Growth is
deterministic: seeds in row-major order, FIFO queue, neighbors pushed
up/down/left/right. On piecewise-constant imagery a region is exactly the
constant connected component under its seed.

A contour, when present, overrides the point path entirely: the mask is
the even-odd fill of the polygon (sampled at pixel centers), again clipped
to the box.

The heavy BFS loop is JIT-compiled; the first call in a fresh environment
pays a one-time compilation cost that is cached on disk afterwards.
"""

from __future__ import annotations

import base64
import threading
import warnings
from dataclasses import dataclass

import numpy as np
from numba import njit

from .core import Image
from .errors import (
    NoForegroundEvidence,
    OutOfBounds,
    ProtocolError,
    SeedConflictWarning,
    TransportError,
)
from .masks import Mask, rle_decode


# --- prompt types ---------------------------------------------------------------

@dataclass(frozen=True)
class PromptPoint:
    """A labeled click: label 1 marks foreground, 0 marks background."""

    x: int
    y: int
    label: int

    def __post_init__(self):
        object.__setattr__(self, "x", int(self.x))
        object.__setattr__(self, "y", int(self.y))
        object.__setattr__(self, "label", int(self.label))
        if self.label not in (0, 1):
            raise ValueError(f"point label must be 0 or 1, got {self.label}")


@dataclass(frozen=True)
class PromptBox:
    """Half-open pixel box: columns [x_lt, x_rb), rows [y_lt, y_rb)."""

    x_lt: int
    y_lt: int
    x_rb: int
    y_rb: int

    def __post_init__(self):
        for name in ("x_lt", "y_lt", "x_rb", "y_rb"):
            object.__setattr__(self, name, int(getattr(self, name)))
        if self.x_lt >= self.x_rb or self.y_lt >= self.y_rb:
            raise OutOfBounds(
                f"box corners ({self.x_lt},{self.y_lt})-({self.x_rb},{self.y_rb}) "
                f"are inverted or empty"
            )


@dataclass(frozen=True)
class PromptSet:
    """Everything one segmentation request carries.

    The constructor is permissive about evidence: a background-only set is
    a legal value (a UI builds prompts incrementally); `segment` rejects it
    with NoForegroundEvidence when actually asked to produce a mask.
    """

    points: tuple[PromptPoint, ...] = ()
    box: PromptBox | None = None
    contour: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))
        if self.contour is not None:
            contour = tuple((float(x), float(y)) for x, y in self.contour)
            if len(contour) < 3:
                raise ValueError(f"contour needs >= 3 vertices, got {len(contour)}")
            object.__setattr__(self, "contour", contour)

    def with_point(self, point: PromptPoint) -> "PromptSet":
        return PromptSet(self.points + (point,), self.box, self.contour)


@dataclass(frozen=True)
class SegmenterConfig:
    """tau: admission threshold on Euclidean RGB distance, channels in [0,1]."""

    tau: float = 0.1

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")


# --- region growing ---------------------------------------------------------------

@njit(cache=True)
def _grow_union(img, seeds_y, seeds_x, tau2):  # pragma: no cover - JIT body
    h, w = img.shape[0], img.shape[1]
    union = np.zeros((h, w), np.bool_)
    in_region = np.zeros((h, w), np.bool_)
    cap = 4 * h * w + 8
    qy = np.empty(cap, np.int32)
    qx = np.empty(cap, np.int32)
    for s in range(seeds_y.shape[0]):
        for i in range(h):
            for j in range(w):
                in_region[i, j] = False
        sy = seeds_y[s]
        sx = seeds_x[s]
        in_region[sy, sx] = True
        union[sy, sx] = True
        m0 = np.float64(img[sy, sx, 0])
        m1 = np.float64(img[sy, sx, 1])
        m2 = np.float64(img[sy, sx, 2])
        count = 1.0
        head = 0
        tail = 0
        # seed's neighbors are the first candidates, up/down/left/right
        if sy > 0:
            qy[tail] = sy - 1
            qx[tail] = sx
            tail += 1
        if sy < h - 1:
            qy[tail] = sy + 1
            qx[tail] = sx
            tail += 1
        if sx > 0:
            qy[tail] = sy
            qx[tail] = sx - 1
            tail += 1
        if sx < w - 1:
            qy[tail] = sy
            qx[tail] = sx + 1
            tail += 1
        while head < tail:
            py = qy[head]
            px = qx[head]
            head += 1
            if in_region[py, px]:
                continue
            d0 = np.float64(img[py, px, 0]) - m0
            d1 = np.float64(img[py, px, 1]) - m1
            d2 = np.float64(img[py, px, 2]) - m2
            if d0 * d0 + d1 * d1 + d2 * d2 > tau2:
                continue  # rejected now; a later admission may re-queue it
            in_region[py, px] = True
            union[py, px] = True
            count += 1.0
            m0 += (np.float64(img[py, px, 0]) - m0) / count
            m1 += (np.float64(img[py, px, 1]) - m1) / count
            m2 += (np.float64(img[py, px, 2]) - m2) / count
            if py > 0 and not in_region[py - 1, px]:
                qy[tail] = py - 1
                qx[tail] = px
                tail += 1
            if py < h - 1 and not in_region[py + 1, px]:
                qy[tail] = py + 1
                qx[tail] = px
                tail += 1
            if px > 0 and not in_region[py, px - 1]:
                qy[tail] = py
                qx[tail] = px - 1
                tail += 1
            if px < w - 1 and not in_region[py, px + 1]:
                qy[tail] = py
                qx[tail] = px + 1
                tail += 1
    return union


def _grow_from_seeds(
    image: Image, seeds: list[tuple[int, int]], tau: float
) -> np.ndarray:
    if not seeds:
        return np.zeros((image.height, image.width), dtype=bool)
    ordered = sorted(seeds)  # row-major: (y, x) ascending
    ys = np.array([s[0] for s in ordered], dtype=np.int64)
    xs = np.array([s[1] for s in ordered], dtype=np.int64)
    return np.asarray(_grow_union(image.data, ys, xs, float(tau) ** 2))


# --- polygon fill -------------------------------------------------------------------

def _fill_contour(
    contour: tuple[tuple[float, float], ...], height: int, width: int
) -> np.ndarray:
    """Even-odd scanline fill sampled at pixel centers (x+0.5, y+0.5).

    A pixel is inside when the number of edge crossings strictly left of
    its center is odd, matching a brute-force ray cast with the same
    half-open edge rule (an edge spans min_y <= cy < max_y).
    """
    verts = np.asarray(contour, dtype=np.float64)
    x1, y1 = verts[:, 0], verts[:, 1]
    x2, y2 = np.roll(x1, -1), np.roll(y1, -1)
    keep = y1 != y2  # horizontal edges never cross a scanline
    x1, y1, x2, y2 = x1[keep], y1[keep], x2[keep], y2[keep]
    bits = np.zeros((height, width), dtype=bool)
    if x1.size == 0:
        return bits
    lo, hi = np.minimum(y1, y2), np.maximum(y1, y2)
    centers = np.arange(width, dtype=np.float64) + 0.5
    for row in range(height):
        cy = row + 0.5
        span = (lo <= cy) & (cy < hi)
        if not span.any():
            continue
        t = (cy - y1[span]) / (y2[span] - y1[span])
        crossings = np.sort(x1[span] + t * (x2[span] - x1[span]))
        # count of crossings strictly left of each pixel center
        left = np.searchsorted(crossings, centers, side="left")
        bits[row] = (left % 2) == 1
    return bits


# --- segmentation entry points ------------------------------------------------------

def segment(
    image: Image, prompts: PromptSet, cfg: SegmenterConfig = SegmenterConfig()
) -> Mask:
    """Produce a binary mask from prompts; see module docstring for rules."""
    h, w = image.height, image.width
    for p in prompts.points:
        if not (0 <= p.x < w and 0 <= p.y < h):
            raise OutOfBounds(f"point ({p.x},{p.y}) outside {h}x{w} image")
    box = prompts.box
    if box is not None and not (
        0 <= box.x_lt and box.x_rb <= w and 0 <= box.y_lt and box.y_rb <= h
    ):
        raise OutOfBounds(
            f"box ({box.x_lt},{box.y_lt})-({box.x_rb},{box.y_rb}) "
            f"outside {h}x{w} image"
        )

    if prompts.contour is not None:
        bits = _fill_contour(prompts.contour, h, w)
    else:
        fg = [(p.y, p.x) for p in prompts.points if p.label == 1]
        if not fg:
            raise NoForegroundEvidence(
                "prompts carry no foreground point and no contour"
            )
        bg = [(p.y, p.x) for p in prompts.points if p.label == 0]
        fg_bits = _grow_from_seeds(image, fg, cfg.tau)
        bg_bits = _grow_from_seeds(image, bg, cfg.tau)
        lost = [(y, x) for (y, x) in fg if bg_bits[y, x]]
        if lost:
            warnings.warn(
                f"background growth removed foreground seed(s) {lost}",
                SeedConflictWarning,
            )
        bits = fg_bits & ~bg_bits

    if box is not None:
        clip = np.zeros((h, w), dtype=bool)
        clip[box.y_lt : box.y_rb, box.x_lt : box.x_rb] = True
        bits &= clip
    return Mask(bits)


def refine(
    image: Image,
    previous: PromptSet,
    added: PromptPoint,
    cfg: SegmenterConfig = SegmenterConfig(),
) -> Mask:
    """One interactive step: recompute the mask with one more point.

    Pure recomputation; the name exists because this is the call on the
    UI's latency budget (<= 100 ms at 512x512 after JIT warmup).
    """
    return segment(image, previous.with_point(added), cfg)


def warmup(cfg: SegmenterConfig = SegmenterConfig()) -> None:
    """Trigger JIT compilation ahead of the first real request."""
    tiny = Image(np.zeros((2, 2, 3), dtype=np.float32))
    segment(tiny, PromptSet(points=(PromptPoint(0, 0, 1),)), cfg)


# --- prompt wire form ------------------------------------------------------------------

def prompts_to_json(prompts: PromptSet) -> dict:
    return {
        "points": [{"x": p.x, "y": p.y, "label": p.label} for p in prompts.points],
        "box": None
        if prompts.box is None
        else {
            "x_lt": prompts.box.x_lt,
            "y_lt": prompts.box.y_lt,
            "x_rb": prompts.box.x_rb,
            "y_rb": prompts.box.y_rb,
        },
        "contour": None
        if prompts.contour is None
        else [[x, y] for x, y in prompts.contour],
    }


def prompts_from_json(obj: dict) -> PromptSet:
    """Parse the wire form; raises ValueError/KeyError/TypeError on junk."""
    if not isinstance(obj, dict):
        raise ValueError("prompt payload must be a JSON object")
    points = tuple(
        PromptPoint(p["x"], p["y"], p["label"]) for p in obj.get("points", [])
    )
    box_obj = obj.get("box")
    box = (
        None
        if box_obj is None
        else PromptBox(box_obj["x_lt"], box_obj["y_lt"], box_obj["x_rb"], box_obj["y_rb"])
    )
    contour_obj = obj.get("contour")
    contour = (
        None
        if contour_obj is None
        else tuple((float(v[0]), float(v[1])) for v in contour_obj)
    )
    return PromptSet(points=points, box=box, contour=contour)


# --- remote segmentation client -----------------------------------------------------------

def remote_segment(
    endpoint: str, image: Image, prompts: PromptSet, timeout: float = 10.0
) -> Mask:
    """Ask an external promptable-segmentation service for the mask.

    The wire protocol carries points and an optional box only; contour
    prompts must be handled locally by the caller.
    """
    import requests

    from .pngio import write_png

    if prompts.contour is not None:
        raise ValueError("the remote protocol does not carry contours")
    payload = prompts_to_json(prompts)
    del payload["contour"]
    payload["image"] = base64.b64encode(write_png(image)).decode("ascii")
    url = endpoint.rstrip("/") + "/segment"
    try:
        resp = requests.post(url, json=payload, timeout=timeout)
    except requests.RequestException as exc:
        raise TransportError(f"segmentation endpoint {url} unreachable: {exc}") from exc
    if resp.status_code != 200:
        raise ProtocolError(f"segmentation endpoint returned {resp.status_code}")
    try:
        rle = resp.json()
        mask = rle_decode(rle)
    except Exception as exc:
        raise ProtocolError(f"segmentation endpoint sent an invalid mask: {exc}") from exc
    if (mask.height, mask.width) != (image.height, image.width):
        raise ProtocolError(
            f"mask dims {mask.height}x{mask.width} do not match "
            f"image {image.height}x{image.width}"
        )
    return mask


class RemoteSegmenter:
    """One endpoint handle; requests through it are serialized."""

    def __init__(self, endpoint: str, timeout: float = 10.0):
        self.endpoint = endpoint
        self.timeout = timeout
        self._lock = threading.Lock()

    def segment(self, image: Image, prompts: PromptSet) -> Mask:
        with self._lock:
            return remote_segment(self.endpoint, image, prompts, self.timeout)
