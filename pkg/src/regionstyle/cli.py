"""Command-line front door: stylize, segment, serve.

Exit codes: 0 success; 2 for input problems (missing or unreadable files,
bad flags, prompts without foreground evidence); 3 for pipeline failures
on valid inputs (a style mask vanishing at feature resolution, shape
mismatches between masks and images).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .codec import load_weights
from .core import Image
from .errors import (
    BadImage,
    ChecksumError,
    FormatError,
    ImageTooSmall,
    LengthMismatch,
    NoForegroundEvidence,
    OutOfBounds,
    RegionStyleError,
    ShapeError,
)
from .masks import Mask, MaskPair, MaskPairSet, read_mask_png, write_mask_png
from .pngio import read_png, write_png
from .segmenter import (
    PromptBox,
    PromptPoint,
    PromptSet,
    SegmenterConfig,
    segment,
)
from .service import DEFAULT_PORT, create_app
from .stylizer import stylize

# Errors the user can fix by supplying different inputs -> exit 2.
# Everything else raised by the library is a pipeline failure -> exit 3.
_INPUT_ERRORS = (
    FormatError,
    ShapeError,
    ChecksumError,
    BadImage,
    NoForegroundEvidence,
    OutOfBounds,
    LengthMismatch,
    ImageTooSmall,
)


def _read_image(path: str, what: str) -> Image:
    p = Path(path)
    if not p.is_file():
        raise BadImage(f"{what} file {p} does not exist")
    return read_png(p.read_bytes())


def _load_model(path: str):
    p = Path(path)
    if not p.is_file():
        raise FormatError(f"weights file {p} does not exist")
    return load_weights(p)


def _read_manifest(path: str) -> MaskPairSet:
    p = Path(path)
    if not p.is_file():
        raise FormatError(f"pairs manifest {p} does not exist")
    try:
        manifest = json.loads(p.read_text())
        entries = manifest["pairs"]
    except (ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"pairs manifest {p} is malformed: {exc}") from exc
    pairs = []
    for i, entry in enumerate(entries):
        try:
            content_rel = entry["content_mask"]
            style_rel = entry["style_mask"]
        except (KeyError, TypeError) as exc:
            raise FormatError(f"manifest pair {i} is malformed: {exc}") from exc
        pairs.append(
            MaskPair(
                _read_mask(p.parent / content_rel, f"pair {i} content mask"),
                _read_mask(p.parent / style_rel, f"pair {i} style mask"),
            )
        )
    return MaskPairSet(tuple(pairs))


def _read_mask(path: Path, what: str) -> Mask:
    if not path.is_file():
        raise BadImage(f"{what} file {path} does not exist")
    return read_mask_png(path.read_bytes())


def cmd_stylize(args: argparse.Namespace) -> int:
    model = _load_model(args.weights)
    content = _read_image(args.content, "content image")
    style = _read_image(args.style, "style image")
    pairs = _read_manifest(args.pairs)
    result = stylize(content, style, pairs, model)
    Path(args.out).write_bytes(write_png(result))
    return 0


def _parse_point(text: str) -> PromptPoint:
    try:
        x, y, label = (int(v) for v in text.split(","))
        return PromptPoint(x, y, label)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(
            f"--point wants x,y,l with l in {{0,1}}, got {text!r}"
        ) from exc


def _parse_box(text: str) -> PromptBox:
    try:
        x1, y1, x2, y2 = (int(v) for v in text.split(","))
        return PromptBox(x1, y1, x2, y2)
    except (ValueError, OutOfBounds) as exc:
        raise argparse.ArgumentTypeError(
            f"--box wants x_lt,y_lt,x_rb,y_rb with positive extent, got {text!r}"
        ) from exc


def _parse_contour(text: str) -> tuple[tuple[float, float], ...]:
    try:
        flat = [float(v) for v in text.split(",")]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(
            f"--contour wants x1,y1,x2,y2,... got {text!r}"
        ) from exc
    if len(flat) < 6 or len(flat) % 2:
        raise argparse.ArgumentTypeError(
            "--contour needs an even count of >= 6 coordinates"
        )
    return tuple((flat[i], flat[i + 1]) for i in range(0, len(flat), 2))


def cmd_segment(args: argparse.Namespace) -> int:
    image = _read_image(args.image, "input image")
    prompts = PromptSet(
        points=tuple(args.point or ()),
        box=args.box,
        contour=args.contour,
    )
    mask = segment(image, prompts, SegmenterConfig(tau=args.tau))
    Path(args.out).write_bytes(write_mask_png(mask))
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    model = _load_model(args.weights)
    app = create_app(model, segment_url=args.segment_url, data_dir=args.data_dir)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="regionstyle",
        description="Region-paired style transfer with prompt-driven masks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_style = sub.add_parser("stylize", help="render a stylized image")
    p_style.add_argument("--content", required=True, help="content image PNG")
    p_style.add_argument("--style", required=True, help="style image PNG")
    p_style.add_argument(
        "--pairs",
        required=True,
        help='JSON manifest {"pairs":[{"content_mask":..,"style_mask":..}]}; '
        "mask paths are relative to the manifest",
    )
    p_style.add_argument("--weights", required=True, help="NSTW weights file")
    p_style.add_argument("--out", required=True, help="output PNG path")
    p_style.set_defaults(func=cmd_stylize)

    p_seg = sub.add_parser("segment", help="produce a mask PNG from prompts")
    p_seg.add_argument("--image", required=True, help="input image PNG")
    p_seg.add_argument(
        "--point",
        action="append",
        type=_parse_point,
        help="x,y,l with l=1 foreground / 0 background (repeatable)",
    )
    p_seg.add_argument("--box", type=_parse_box, help="x_lt,y_lt,x_rb,y_rb")
    p_seg.add_argument(
        "--contour", type=_parse_contour, help="x1,y1,x2,y2,... closed polygon"
    )
    p_seg.add_argument("--tau", type=float, default=0.1, help="growth threshold")
    p_seg.add_argument("--out", required=True, help="output mask PNG path")
    p_seg.set_defaults(func=cmd_segment)

    p_serve = sub.add_parser("serve", help="run the HTTP service")
    p_serve.add_argument(
        "--port",
        type=int,
        default=int(os.environ.get("REGIONSTYLE_PORT", DEFAULT_PORT)),
    )
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument(
        "--weights",
        default=os.environ.get("REGIONSTYLE_WEIGHTS"),
        help="NSTW weights file (or env REGIONSTYLE_WEIGHTS)",
    )
    p_serve.add_argument(
        "--segment-url",
        default=os.environ.get("REGIONSTYLE_SEGMENT_URL"),
        help="remote promptable-segmentation endpoint (optional)",
    )
    p_serve.add_argument(
        "--data-dir",
        default=os.environ.get("REGIONSTYLE_DATA_DIR"),
        help="directory for session persistence (optional)",
    )
    p_serve.set_defaults(func=cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "serve" and not args.weights:
        print("error: serve needs --weights or REGIONSTYLE_WEIGHTS", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except RegionStyleError as exc:
        print(f"{exc.name}: {exc}", file=sys.stderr)
        return 2 if isinstance(exc, _INPUT_ERRORS) else 3


if __name__ == "__main__":
    sys.exit(main())
