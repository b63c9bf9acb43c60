"""Boundary-aware segmentation metrics.

All three metrics accumulate integer statistics across a dataset before any
ratio is formed (dataset-level, not per-image averaging). Distances are
Euclidean, computed with an exact two-pass distance transform: a vertical
sweep for per-column distances, then a lower-envelope pass along rows over
squared distances.

Boundary pixels for metric purposes always come from radius-1 boundary
extraction, independent of any training-label radius. For boundary IoU the
image border counts as background, so a mask touching the border has band
pixels there; with a threshold at least the image diagonal the band
saturates to the whole mask and the metric reduces to plain mask IoU.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .boundary import LabelMap, semantic_boundary_label
from .errors import ConfigurationError, ContractViolation

METRIC_BOUNDARY_RADIUS = 1


# ---------------------------------------------------------------------------
# exact Euclidean distance transform


def _edt_1d_sq(f: np.ndarray) -> np.ndarray:
    """1-D squared-distance transform d(p) = min_q (p-q)^2 + f(q)."""
    n = f.shape[0]
    d = np.empty(n)
    v = np.zeros(n, dtype=np.intp)
    z = np.empty(n + 1)
    k = 0
    z[0], z[1] = -np.inf, np.inf
    for q in range(1, n):
        s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * (q - v[k]))
        while s <= z[k]:
            k -= 1
            s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * (q - v[k]))
        k += 1
        v[k] = q
        z[k] = s
        z[k + 1] = np.inf
    k = 0
    for q in range(n):
        while z[k + 1] < q:
            k += 1
        d[q] = (q - v[k]) ** 2 + f[v[k]]
    return d


def distance_transform(feature: np.ndarray) -> np.ndarray:
    """Exact Euclidean distance from every pixel to the nearest True pixel.

    Rows/columns with no feature pixel propagate a sentinel larger than any
    in-image distance, so thresholding at any sensible radius stays correct
    even when the feature set is empty.
    """
    if feature.ndim != 2:
        raise ContractViolation(f"expected 2-D mask, got shape {feature.shape}")
    h, w = feature.shape
    big = float(h + w)
    # pass 1: vertical distance per column (running min down, then up)
    dv = np.where(feature, 0.0, big)
    for i in range(1, h):
        dv[i] = np.minimum(dv[i], dv[i - 1] + 1.0)
    for i in range(h - 2, -1, -1):
        dv[i] = np.minimum(dv[i], dv[i + 1] + 1.0)
    # pass 2: lower envelope along each row over squared distances
    out = np.empty((h, w))
    for i in range(h):
        out[i] = _edt_1d_sq(dv[i] ** 2)
    return np.sqrt(out)


# ---------------------------------------------------------------------------
# mIoU


def _check_pair(pred: LabelMap, gt: LabelMap):
    if pred.labels.shape != gt.labels.shape:
        raise ContractViolation(
            f"label map shapes differ: {pred.labels.shape} vs {gt.labels.shape}"
        )
    if pred.num_classes != gt.num_classes:
        raise ContractViolation(
            f"class counts differ: {pred.num_classes} vs {gt.num_classes}"
        )


def confusion_matrix(pred: LabelMap, gt: LabelMap) -> np.ndarray:
    """(N,N) counts indexed [gt_class, pred_class]."""
    _check_pair(pred, gt)
    n = gt.num_classes
    idx = gt.labels.ravel() * n + pred.labels.ravel()
    return np.bincount(idx, minlength=n * n).reshape(n, n)


def iou_from_confusion(cm: np.ndarray):
    """Per-class IoU (NaN for classes absent from both sides) and their mean."""
    inter = np.diag(cm).astype(float)
    union = cm.sum(axis=0) + cm.sum(axis=1) - np.diag(cm)
    per_class = np.where(union > 0, inter / np.maximum(union, 1), np.nan)
    mean = float(np.nanmean(per_class)) if np.any(union > 0) else float("nan")
    return per_class, mean


def miou(pred: LabelMap, gt: LabelMap):
    return iou_from_confusion(confusion_matrix(pred, gt))


# ---------------------------------------------------------------------------
# boundary F-score


def boundary_match_counts(pred: LabelMap, gt: LabelMap, d_px: float) -> np.ndarray:
    """Per class: [matched_pred, total_pred, matched_gt, total_gt] pixel counts.

    A predicted boundary pixel matches when some GT boundary pixel of the
    same class lies within Euclidean distance d_px, and symmetrically.
    """
    _check_pair(pred, gt)
    if d_px < 1:
        raise ConfigurationError(f"distance threshold must be >= 1, got {d_px}")
    n = gt.num_classes
    pred_b = semantic_boundary_label(pred, METRIC_BOUNDARY_RADIUS).astype(bool)
    gt_b = semantic_boundary_label(gt, METRIC_BOUNDARY_RADIUS).astype(bool)
    counts = np.zeros((n, 4), dtype=np.int64)
    for k in range(n):
        p, g = pred_b[k], gt_b[k]
        counts[k, 1] = p.sum()
        counts[k, 3] = g.sum()
        if counts[k, 1] and counts[k, 3]:
            dist_to_gt = distance_transform(g)
            dist_to_pred = distance_transform(p)
            counts[k, 0] = int((dist_to_gt[p] <= d_px).sum())
            counts[k, 2] = int((dist_to_pred[g] <= d_px).sum())
    return counts


def fscore_from_counts(counts: np.ndarray):
    """Per-class F (NaN where both boundary sets are empty) and the mean."""
    per_class = np.full(counts.shape[0], np.nan)
    for k, (mp, tp, mg, tg) in enumerate(counts):
        if tp == 0 and tg == 0:
            continue
        precision = mp / tp if tp else 0.0
        recall = mg / tg if tg else 0.0
        per_class[k] = (
            2.0 * precision * recall / (precision + recall) if precision + recall else 0.0
        )
    mean = float(np.nanmean(per_class)) if np.any(~np.isnan(per_class)) else float("nan")
    return per_class, mean


def boundary_fscore(pred: LabelMap, gt: LabelMap, d_px: float):
    return fscore_from_counts(boundary_match_counts(pred, gt, d_px))


# ---------------------------------------------------------------------------
# boundary IoU


def boundary_band(mask: np.ndarray, d_px: float) -> np.ndarray:
    """Pixels of ``mask`` within d_px of its complement (border = background)."""
    if mask.ndim != 2:
        raise ContractViolation(f"expected 2-D mask, got shape {mask.shape}")
    padded = np.pad(~mask.astype(bool), 1, constant_values=True)
    dist = distance_transform(padded)[1:-1, 1:-1]
    return mask.astype(bool) & (dist <= d_px)


def biou_counts(pred: LabelMap, gt: LabelMap, d_px: float) -> np.ndarray:
    """Per class: [band_intersection, band_union, present_pred, present_gt]."""
    _check_pair(pred, gt)
    if d_px < 1:
        raise ConfigurationError(f"distance threshold must be >= 1, got {d_px}")
    n = gt.num_classes
    counts = np.zeros((n, 4), dtype=np.int64)
    for k in range(n):
        p_mask = pred.labels == k
        g_mask = gt.labels == k
        counts[k, 2] = int(p_mask.any())
        counts[k, 3] = int(g_mask.any())
        if not (counts[k, 2] or counts[k, 3]):
            continue
        p_band = boundary_band(p_mask, d_px) if counts[k, 2] else np.zeros_like(p_mask)
        g_band = boundary_band(g_mask, d_px) if counts[k, 3] else np.zeros_like(g_mask)
        counts[k, 0] = int((p_band & g_band).sum())
        counts[k, 1] = int((p_band | g_band).sum())
    return counts


def biou_from_counts(counts: np.ndarray, masks_equal=None):
    """Per-class BIoU (NaN where the class is absent from both sides), mean."""
    per_class = np.full(counts.shape[0], np.nan)
    for k, (inter, union, pp, pg) in enumerate(counts):
        if not (pp or pg):
            continue
        if union == 0:
            per_class[k] = 1.0 if (masks_equal is not None and masks_equal[k]) else 0.0
        else:
            per_class[k] = inter / union
    mean = float(np.nanmean(per_class)) if np.any(~np.isnan(per_class)) else float("nan")
    return per_class, mean


def biou(pred: LabelMap, gt: LabelMap, d_px: float):
    counts = biou_counts(pred, gt, d_px)
    equal = np.array([
        np.array_equal(pred.labels == k, gt.labels == k) for k in range(gt.num_classes)
    ])
    return biou_from_counts(counts, masks_equal=equal)


# ---------------------------------------------------------------------------
# dataset-level evaluation


@dataclass
class MetricsReport:
    num_classes: int
    thresholds: list
    per_class_iou: np.ndarray
    miou: float
    fscore: dict          # threshold -> (per-class array, mean)
    biou: dict            # threshold -> (per-class array, mean)
    pixel_count: int
    image_count: int

    def to_json(self) -> dict:
        def listify(arr):
            return [None if np.isnan(v) else float(v) for v in arr]

        return {
            "num_classes": self.num_classes,
            "thresholds": list(self.thresholds),
            "per_class_iou": listify(self.per_class_iou),
            "miou": None if np.isnan(self.miou) else self.miou,
            "fscore": {
                str(d): {"per_class": listify(pc), "mean": None if np.isnan(m) else m}
                for d, (pc, m) in self.fscore.items()
            },
            "biou": {
                str(d): {"per_class": listify(pc), "mean": None if np.isnan(m) else m}
                for d, (pc, m) in self.biou.items()
            },
            "pixel_count": self.pixel_count,
            "image_count": self.image_count,
        }


def evaluate_dataset(predict, dataset, thresholds=(3, 5, 9, 12)) -> MetricsReport:
    """Accumulate statistics over (image, LabelMap) pairs, then form metrics.

    ``predict(image) -> LabelMap`` supplies the prediction for each sample.
    Statistics are summed across the whole dataset before any ratio is
    computed, so duplicating every sample leaves the report unchanged.
    """
    dataset = list(dataset)
    if not dataset:
        raise ConfigurationError("empty dataset")
    n = dataset[0][1].num_classes
    cm = np.zeros((n, n), dtype=np.int64)
    f_counts = {d: np.zeros((n, 4), dtype=np.int64) for d in thresholds}
    b_counts = {d: np.zeros((n, 4), dtype=np.int64) for d in thresholds}
    masks_equal = {d: np.ones(n, dtype=bool) for d in thresholds}
    pixel_count = 0
    for image, gt in dataset:
        pred = predict(image)
        if pred.num_classes != n:
            raise ConfigurationError(
                f"prediction has {pred.num_classes} classes, dataset has {n}"
            )
        cm += confusion_matrix(pred, gt)
        pixel_count += gt.labels.size
        for d in thresholds:
            f_counts[d] += boundary_match_counts(pred, gt, d)
            b_counts[d] += biou_counts(pred, gt, d)
            for k in range(n):
                if not np.array_equal(pred.labels == k, gt.labels == k):
                    masks_equal[d][k] = False
    per_class_iou, mean_iou = iou_from_confusion(cm)
    return MetricsReport(
        num_classes=n,
        thresholds=list(thresholds),
        per_class_iou=per_class_iou,
        miou=mean_iou,
        fscore={d: fscore_from_counts(f_counts[d]) for d in thresholds},
        biou={d: biou_from_counts(b_counts[d], masks_equal[d]) for d in thresholds},
        pixel_count=pixel_count,
        image_count=len(dataset),
    )
