"""Raster primitives: RGB images, binary masks, boxes, morphology and PNG IO.

Conventions shared by every module: integer pixel coordinates, (0, 0) at the
top-left corner, x grows rightwards, y grows downwards. Arrays are row-major
(height, width).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image


class FormatError(ValueError):
    """Raised when a file is not the 8-bit PNG flavor we accept."""


class EmptyMaskError(ValueError):
    """Raised when an operation requires at least one foreground pixel."""


@dataclass(frozen=True)
class ImageRGB:
    """8-bit interleaved RGB raster, pixels shaped (height, width, 3)."""

    pixels: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.pixels, dtype=np.uint8)
        if p.ndim != 3 or p.shape[2] != 3:
            raise ValueError(f"expected (H, W, 3) pixel array, got {p.shape}")
        if p.shape[0] < 1 or p.shape[1] < 1:
            raise ValueError("image must be at least 1x1")
        p.setflags(write=False)
        object.__setattr__(self, "pixels", p)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True)
class BinaryMask:
    """Per-pixel foreground bitmap, bits shaped (height, width), bool."""

    bits: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.bits)
        if b.dtype != np.bool_:
            b = b.astype(bool)
        if b.ndim != 2:
            raise ValueError(f"expected (H, W) bit array, got {b.shape}")
        b.setflags(write=False)
        object.__setattr__(self, "bits", b)

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    def count(self) -> int:
        return int(self.bits.sum())

    def is_empty(self) -> bool:
        return not self.bits.any()


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned pixel box: top-left (x, y), extent (w, h), w, h >= 1."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w < 1 or self.h < 1:
            raise ValueError(f"box extent must be >= 1, got {self.w}x{self.h}")

    @property
    def area(self) -> int:
        return self.w * self.h


def load_image(path) -> ImageRGB:
    """Load an 8-bit PNG (grayscale replicated to RGB, or RGB)."""
    img = Image.open(path)
    if img.format != "PNG":
        raise FormatError(f"{path}: expected PNG, got {img.format}")
    if img.mode == "L":
        img = img.convert("RGB")
    if img.mode != "RGB":
        raise FormatError(f"{path}: unsupported PNG mode {img.mode!r} "
                          "(only 8-bit grayscale or RGB)")
    return ImageRGB(np.asarray(img, dtype=np.uint8))


def save_image(image: ImageRGB, path) -> None:
    Image.fromarray(np.asarray(image.pixels), mode="RGB").save(path, format="PNG")


def load_mask(path) -> BinaryMask:
    """Load an 8-bit grayscale PNG as a mask; values > 127 are foreground."""
    img = Image.open(path)
    if img.format != "PNG":
        raise FormatError(f"{path}: expected PNG, got {img.format}")
    if img.mode != "L":
        raise FormatError(f"{path}: mask must be 8-bit grayscale, mode is {img.mode!r}")
    return BinaryMask(np.asarray(img, dtype=np.uint8) > 127)


def save_mask(mask: BinaryMask, path) -> None:
    """Write a mask as 8-bit grayscale PNG (foreground 255, background 0)."""
    data = np.where(mask.bits, 255, 0).astype(np.uint8)
    Image.fromarray(data, mode="L").save(path, format="PNG")


def _dilate_once(bits: np.ndarray) -> np.ndarray:
    # Full 3x3 structuring element; the image border clips.
    h, w = bits.shape
    padded = np.pad(bits, 1)
    out = np.zeros_like(bits)
    for dy in (0, 1, 2):
        for dx in (0, 1, 2):
            out |= padded[dy:dy + h, dx:dx + w]
    return out


def dilate(mask: BinaryMask, iterations: int = 1) -> BinaryMask:
    """Binary dilation with the full 3x3 square, applied `iterations` times.

    Each iteration adds exactly the pixels at chessboard distance 1 from the
    current foreground.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    bits = mask.bits
    for _ in range(iterations):
        bits = _dilate_once(bits)
    return BinaryMask(bits)


def erode(mask: BinaryMask, iterations: int = 1) -> BinaryMask:
    """Dual of dilate (3x3 square); pixels outside the image count as background."""
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    bits = mask.bits
    for _ in range(iterations):
        bits = ~_dilate_once(~bits)
        # border pixels lose their out-of-image neighbors
        h, w = bits.shape
        inner = np.zeros_like(bits)
        inner[1:h - 1, 1:w - 1] = True
        bits = bits & inner if (h > 2 and w > 2) else np.zeros_like(bits)
    return BinaryMask(bits)


def subtract(a: BinaryMask, b: BinaryMask) -> BinaryMask:
    """Set difference a \\ b."""
    if a.bits.shape != b.bits.shape:
        raise ValueError(f"mask dimensions differ: {a.bits.shape} vs {b.bits.shape}")
    return BinaryMask(a.bits & ~b.bits)


def mask_bbox(mask: BinaryMask) -> BoundingBox:
    """Tight axis-aligned bounding box of the foreground."""
    ys, xs = np.nonzero(mask.bits)
    if len(ys) == 0:
        raise EmptyMaskError("cannot take the bounding box of an empty mask")
    x0, x1 = int(xs.min()), int(xs.max())
    y0, y1 = int(ys.min()), int(ys.max())
    return BoundingBox(x0, y0, x1 - x0 + 1, y1 - y0 + 1)


def box_iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two boxes in pixel-count terms."""
    ix = max(0, min(a.x + a.w, b.x + b.w) - max(a.x, b.x))
    iy = max(0, min(a.y + a.h, b.y + b.h) - max(a.y, b.y))
    inter = ix * iy
    union = a.area + b.area - inter
    return inter / union
