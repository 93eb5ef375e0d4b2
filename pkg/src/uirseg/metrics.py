"""Binary segmentation quality measures: pixel accuracy, mean accuracy, mean IoU.

All measures are derived from ConfusionCounts so they can be computed per image
or aggregated over a dataset by summing counts first. Dataset reporting
defaults to per-image averaging.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .imagecore import BinaryMask


@dataclass(frozen=True)
class ConfusionCounts:
    cf: int      # correctly classified foreground pixels
    cb: int      # correctly classified background pixels
    f: int       # ground-truth foreground total
    b: int       # ground-truth background total
    fp_f: int    # predicted foreground, actually background
    fn_f: int    # predicted background, actually foreground

    @property
    def fp_b(self) -> int:
        # a background false positive is a foreground false negative
        return self.fn_f

    @property
    def fn_b(self) -> int:
        return self.fp_f

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.cf + other.cf, self.cb + other.cb,
                               self.f + other.f, self.b + other.b,
                               self.fp_f + other.fp_f, self.fn_f + other.fn_f)


@dataclass(frozen=True)
class MetricsReport:
    pixel_acc: float
    mean_acc: float
    mean_iou: float
    fg_iou: float


def confusion(pred: BinaryMask, gt: BinaryMask) -> ConfusionCounts:
    if pred.bits.shape != gt.bits.shape:
        raise ValueError(f"mask dimensions differ: {pred.bits.shape} vs {gt.bits.shape}")
    p, g = pred.bits, gt.bits
    return ConfusionCounts(
        cf=int((p & g).sum()),
        cb=int((~p & ~g).sum()),
        f=int(g.sum()),
        b=int((~g).sum()),
        fp_f=int((p & ~g).sum()),
        fn_f=int((~p & g).sum()),
    )


def pixel_accuracy(c: ConfusionCounts) -> float:
    total = c.f + c.b
    if total == 0:
        raise ValueError("zero-pixel image")
    return (c.cf + c.cb) / total


def _class_term(correct: int, gt_total: int, predicted: int) -> float:
    """Per-class accuracy with total degenerate handling.

    A class absent from both ground truth and prediction scores 1; absent from
    ground truth but predicted scores 0.
    """
    if gt_total > 0:
        return correct / gt_total
    return 1.0 if predicted == 0 else 0.0


def mean_accuracy(c: ConfusionCounts) -> float:
    fg = _class_term(c.cf, c.f, c.cf + c.fp_f)
    bg = _class_term(c.cb, c.b, c.cb + c.fp_b)
    return (fg + bg) / 2


def _iou_term(correct: int, fp: int, fn: int) -> float:
    denom = correct + fp + fn
    return correct / denom if denom > 0 else 1.0  # class absent from both masks


def mean_iou(c: ConfusionCounts) -> float:
    fg = _iou_term(c.cf, c.fp_f, c.fn_f)
    bg = _iou_term(c.cb, c.fp_b, c.fn_b)
    return (fg + bg) / 2


def fg_iou(pred: BinaryMask, gt: BinaryMask) -> float:
    """Foreground-class IoU; 1.0 when both masks are empty."""
    c = confusion(pred, gt)
    return _iou_term(c.cf, c.fp_f, c.fn_f)


def report(pred: BinaryMask, gt: BinaryMask) -> MetricsReport:
    c = confusion(pred, gt)
    return MetricsReport(pixel_accuracy(c), mean_accuracy(c), mean_iou(c),
                         _iou_term(c.cf, c.fp_f, c.fn_f))


def dataset_report(per_image: list[tuple[str, MetricsReport]]) -> dict:
    """Evaluation report: one record per image plus per-image-averaged means."""
    records = [{"id": img_id,
                "pixel_acc": r.pixel_acc,
                "mean_acc": r.mean_acc,
                "mean_iou": r.mean_iou,
                "fg_iou": r.fg_iou}
               for img_id, r in per_image]
    means = {}
    if records:
        for key in ("pixel_acc", "mean_acc", "mean_iou", "fg_iou"):
            means[key] = float(np.mean([r[key] for r in records]))
    return {"images": records, "means": means}


def save_report(rep: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(rep, fh, indent=2)
