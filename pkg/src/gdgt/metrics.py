"""Confusion-matrix evaluation: per-category IoU, mIoU, F1, OA, FWIoU.

Rows are ground truth, columns are predictions.  Categories absent from
both ground truth and prediction are excluded from the mIoU and F1 means;
FWIoU weights by ground-truth pixel frequency, so absent categories drop
out of it naturally.
"""

from __future__ import annotations

import numpy as np

from .model import CATEGORY_NAMES, NUM_CATEGORIES


class ConfusionMatrix:
    """Integer count table accumulated over label-mask pairs."""

    def __init__(self, num_categories: int = NUM_CATEGORIES):
        if num_categories < 1:
            raise ValueError("need at least one category")
        self.num_categories = num_categories
        self.counts = np.zeros((num_categories, num_categories), dtype=np.int64)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def copy(self) -> "ConfusionMatrix":
        out = ConfusionMatrix(self.num_categories)
        out.counts = self.counts.copy()
        return out

    def merge(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if other.num_categories != self.num_categories:
            raise ValueError("cannot merge matrices of different sizes")
        self.counts += other.counts
        return self


def accumulate(cm: ConfusionMatrix, pred: np.ndarray,
               gt: np.ndarray) -> ConfusionMatrix:
    """Add one prediction/ground-truth pair into the matrix."""
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs gt {gt.shape}")
    k = cm.num_categories
    p = pred.ravel().astype(np.int64)
    g = gt.ravel().astype(np.int64)
    if p.size and (p.min() < 0 or p.max() >= k):
        raise ValueError(f"prediction labels outside [0, {k})")
    if g.size and (g.min() < 0 or g.max() >= k):
        raise ValueError(f"ground-truth labels outside [0, {k})")
    cm.counts += np.bincount(g * k + p, minlength=k * k).reshape(k, k)
    return cm


def compute_metrics(cm: ConfusionMatrix) -> dict:
    """All headline scores in [0,1] plus the per-category IoU vector.

    Per-category IoU is NaN for categories absent from both gt and pred;
    those entries are skipped by the mIoU/F1 means.
    """
    counts = cm.counts.astype(np.float64)
    total = counts.sum()
    if total <= 0:
        raise ValueError("empty confusion matrix")
    tp = np.diag(counts)
    fn = counts.sum(axis=1) - tp  # gt row minus hits
    fp = counts.sum(axis=0) - tp
    union = tp + fp + fn
    present = union > 0

    iou = np.full(cm.num_categories, np.nan)
    iou[present] = tp[present] / union[present]
    f1 = np.full(cm.num_categories, np.nan)
    f1[present] = 2.0 * tp[present] / (2.0 * tp[present] + fp[present]
                                       + fn[present])
    gt_freq = counts.sum(axis=1) / total
    fwiou = float(np.nansum(np.where(present, gt_freq * iou, 0.0)))

    return {
        "per_category_iou": iou,
        "miou": float(np.nanmean(iou[present])) if present.any() else 0.0,
        "f1": float(np.nanmean(f1[present])) if present.any() else 0.0,
        "oa": float(tp.sum() / total),
        "fwiou": fwiou,
    }


HEADER = (f"{'method':<20s} {'mIoU%':>8s} {'F1%':>8s} {'OA%':>8s} "
          f"{'FWIoU%':>8s}  " + " ".join(f"{n}-IoU%" for n in CATEGORY_NAMES))


def report(metrics: dict, ablation_tag: str) -> str:
    """One fixed-width table row: tag, headline percentages, per-category IoU."""
    cells = [f"{ablation_tag:<20s}"]
    for key in ("miou", "f1", "oa", "fwiou"):
        cells.append(f"{100.0 * metrics[key]:8.2f}")
    per_cat = []
    for value in metrics["per_category_iou"]:
        per_cat.append("     n/a" if np.isnan(value) else f"{100.0 * value:8.2f}")
    return " ".join(cells) + "  " + " ".join(per_cat)


def dump_kv(metrics: dict, ablation_tag: str) -> str:
    """Machine-readable key=value lines (one metric per line)."""
    lines = [f"tag={ablation_tag}"]
    for key in ("miou", "f1", "oa", "fwiou"):
        lines.append(f"{key}={metrics[key]:.17g}")
    for name, value in zip(CATEGORY_NAMES, metrics["per_category_iou"]):
        rendered = "nan" if np.isnan(value) else f"{value:.17g}"
        lines.append(f"iou.{name}={rendered}")
    return "\n".join(lines) + "\n"


def parse_kv(text: str) -> dict:
    """Invert :func:`dump_kv`; float fields come back bit-identical."""
    out: dict = {"per_category_iou": np.full(len(CATEGORY_NAMES), np.nan)}
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        key, _, value = line.partition("=")
        if key == "tag":
            out["tag"] = value
        elif key.startswith("iou."):
            idx = CATEGORY_NAMES.index(key[4:])
            out["per_category_iou"][idx] = float(value)
        else:
            out[key] = float(value)
    return out
