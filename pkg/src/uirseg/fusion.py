"""Marry the predicted region with caption-bearing box proposals.

Proposals come from an external dense-captioning run as a JSON file; we never
compute them. Ranking is by objectness score, matching is IoU between the
proposal box and the mask (box-box by default, box-mask optionally).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .imagecore import (
    BinaryMask,
    BoundingBox,
    EmptyMaskError,
    ImageRGB,
    box_iou,
    erode,
    mask_bbox,
)

DEFAULT_TOP_K = 100

CRITERION_BOX = "box"    # IoU of proposal box vs tight mask box
CRITERION_MASK = "mask"  # IoU of proposal box vs the mask's pixels

HIGHLIGHT = np.array([255, 64, 64], dtype=np.uint8)
BOX_COLOR = np.array([64, 255, 255], dtype=np.uint8)


@dataclass(frozen=True)
class RegionProposal:
    box: BoundingBox
    score: float
    caption: str

    def __post_init__(self):
        if not np.isfinite(self.score):
            raise ValueError("proposal score must be finite")
        if not self.caption:
            raise ValueError("proposal caption must be nonempty")


@dataclass(frozen=True)
class FusionResult:
    chosen: RegionProposal
    iou: float
    mask_box: BoundingBox

    @property
    def caption(self) -> str:
        return self.chosen.caption


def load_proposals(path) -> list[RegionProposal]:
    """Parse a proposals file: JSON array of {box: [x,y,w,h], score, caption}."""
    if hasattr(path, "read"):
        raw = json.load(path)
    else:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    if not isinstance(raw, list):
        raise ValueError("proposals file must contain a JSON array")
    out = []
    for i, rec in enumerate(raw):
        try:
            x, y, w, h = rec["box"]
            out.append(RegionProposal(BoundingBox(int(x), int(y), int(w), int(h)),
                                      float(rec["score"]), str(rec["caption"])))
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"proposal record {i} is invalid: {exc}") from exc
    return out


def save_proposals(proposals: list[RegionProposal], path) -> None:
    recs = [{"box": [p.box.x, p.box.y, p.box.w, p.box.h],
             "score": p.score, "caption": p.caption} for p in proposals]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(recs, fh, indent=2)


def rank_proposals(proposals: list[RegionProposal]) -> list[RegionProposal]:
    """Stable descending sort by objectness score (ties keep input order)."""
    return sorted(proposals, key=lambda p: -p.score)


def _mask_box_iou(mask: BinaryMask, box: BoundingBox) -> float:
    inside = np.zeros_like(mask.bits)
    y1 = min(box.y + box.h, mask.height)
    x1 = min(box.x + box.w, mask.width)
    inside[max(box.y, 0):y1, max(box.x, 0):x1] = True
    inter = int((mask.bits & inside).sum())
    union = int(mask.bits.sum()) + box.area - inter
    return inter / union


def best_match(mask: BinaryMask, proposals: list[RegionProposal],
               top_k: int = DEFAULT_TOP_K,
               criterion: str = CRITERION_BOX) -> FusionResult:
    """Pick the best-overlapping proposal among the top_k highest-scored ones.

    Ties on IoU break toward the higher score, then the earlier rank.
    """
    if mask.is_empty():
        raise EmptyMaskError("cannot fuse an empty mask")
    if not proposals:
        raise ValueError("no proposals to match")
    if criterion not in (CRITERION_BOX, CRITERION_MASK):
        raise ValueError(f"bad criterion {criterion!r}")
    mbox = mask_bbox(mask)
    best = None
    for rank, prop in enumerate(rank_proposals(proposals)[:top_k]):
        if criterion == CRITERION_BOX:
            iou = box_iou(prop.box, mbox)
        else:
            iou = _mask_box_iou(mask, prop.box)
        key = (iou, prop.score, -rank)
        if best is None or key > best[0]:
            best = (key, prop, iou)
    _, prop, iou = best
    return FusionResult(prop, iou, mbox)


def _contour(mask: BinaryMask) -> np.ndarray:
    """Foreground pixels 8-adjacent to background (or to the image edge)."""
    return mask.bits & ~erode(mask, 1).bits


def annotate(image: ImageRGB, mask: BinaryMask,
             result: FusionResult) -> tuple[ImageRGB, dict]:
    """Overlay the mask contour and the chosen box; return (overlay, sidecar)."""
    if (image.height, image.width) != (mask.height, mask.width):
        raise ValueError("image and mask dimensions differ")
    pixels = np.array(image.pixels)
    b = result.chosen.box
    x0, y0 = max(b.x, 0), max(b.y, 0)
    x1 = min(b.x + b.w, image.width) - 1
    y1 = min(b.y + b.h, image.height) - 1
    if x0 <= x1 and y0 <= y1:
        pixels[y0, x0:x1 + 1] = BOX_COLOR
        pixels[y1, x0:x1 + 1] = BOX_COLOR
        pixels[y0:y1 + 1, x0] = BOX_COLOR
        pixels[y0:y1 + 1, x1] = BOX_COLOR
    # contour wins where box edge and mask overlap
    pixels[_contour(mask)] = HIGHLIGHT

    sidecar = {
        "caption": result.caption,
        "iou": result.iou,
        "mask_box": [result.mask_box.x, result.mask_box.y,
                     result.mask_box.w, result.mask_box.h],
        "chosen_box": [b.x, b.y, b.w, b.h],
    }
    return ImageRGB(pixels), sidecar
