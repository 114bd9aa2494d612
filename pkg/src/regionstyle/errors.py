"""Exception hierarchy shared across the package.

Every error that crosses the CLI or HTTP boundary is reported by its class
name (e.g. ``{"error": "MaskTooSmall"}``), so class names are part of the
wire contract and must not be renamed casually.
"""

from __future__ import annotations


class RegionStyleError(Exception):
    """Base class for all library errors."""

    @property
    def name(self) -> str:
        return type(self).__name__


# --- dense numerics ---------------------------------------------------------

class ChannelMismatch(RegionStyleError):
    """Channel count of an input does not match the consumer's expectation."""


class DimensionMismatch(RegionStyleError):
    """Matrix or feature-map shapes do not agree."""


class DegenerateRow(RegionStyleError):
    """An attention row consists entirely of -inf and cannot be normalized."""

    def __init__(self, row: int, message: str | None = None):
        self.row = row
        super().__init__(message or f"attention row {row} is entirely -inf")


# --- codec / weight container ------------------------------------------------

class ImageTooSmall(RegionStyleError):
    """Image is smaller than the encoder's downsampling factor."""


class FormatError(RegionStyleError):
    """Weight file is structurally invalid (bad magic, version, truncation)."""


class ShapeError(RegionStyleError):
    """Declared tensor dimensions do not match the data actually present."""


class ChecksumError(RegionStyleError):
    """Weight file parses but its trailing CRC-32 does not match."""


# --- mask engine -------------------------------------------------------------

class MaskTooSmall(RegionStyleError):
    """A style mask vanished when downsampled to feature resolution."""

    def __init__(self, message: str, pair_index: int | None = None):
        self.pair_index = pair_index
        super().__init__(message)


class GridMismatch(RegionStyleError):
    """Mask resolution does not tile onto the requested feature grid."""


class EmptyStyleMask(RegionStyleError):
    """A fusion pair carries an empty style mask."""


class LengthMismatch(RegionStyleError):
    """RLE runs do not sum to the declared mask area."""


# --- segmenter ----------------------------------------------------------------

class NoForegroundEvidence(RegionStyleError):
    """Prompt set has neither a foreground point nor a contour."""


class OutOfBounds(RegionStyleError):
    """A prompt coordinate lies outside the image (or the box is inverted)."""


class TransportError(RegionStyleError):
    """Remote segmentation endpoint unreachable or timed out."""


class ProtocolError(RegionStyleError):
    """Remote segmentation endpoint answered with an invalid payload."""


# --- service -------------------------------------------------------------------

class NotFound(RegionStyleError):
    """Unknown session id, or a resource that does not exist yet."""


class BadImage(RegionStyleError):
    """Uploaded bytes do not decode as a usable image."""


class DimMismatch(RegionStyleError):
    """Committed mask dimensions do not match the session's images."""


class BadIndex(RegionStyleError):
    """Pair index out of range."""


class BadRequest(RegionStyleError):
    """Malformed request body."""


class SeedConflictWarning(UserWarning):
    """A foreground seed was removed again by background growth."""


class EmptyPairWarning(UserWarning):
    """A content mask vanished at feature resolution; its pair is a no-op."""
