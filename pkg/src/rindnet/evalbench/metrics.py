"""Precision/recall curves over thresholds and the ODS, OIS and AP summaries."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from rindnet.evalbench.matching import match_edges

DEFAULT_THRESHOLDS = tuple(round(0.01 * k, 2) for k in range(1, 100))
MAX_DIST_FRAC = 0.0075
RECALL_GRID = np.round(np.arange(1, 101) / 100.0, 2)


def max_dist_for(shape: tuple[int, int], frac: float = MAX_DIST_FRAC) -> float:
    return frac * math.hypot(*shape)


def prf(tp_pred, n_pred, tp_gt, n_gt):
    """Precision, recall and F-measure; P=1 for no predictions, R=1 for no ground truth."""
    tp_pred, n_pred, tp_gt, n_gt = (np.asarray(v, dtype=np.float64) for v in (tp_pred, n_pred, tp_gt, n_gt))
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(n_pred > 0, tp_pred / np.where(n_pred > 0, n_pred, 1), 1.0)
        r = np.where(n_gt > 0, tp_gt / np.where(n_gt > 0, n_gt, 1), 1.0)
        f = np.where(p + r > 0, 2 * p * r / np.where(p + r > 0, p + r, 1), 0.0)
    return p, r, f


def image_counts(thinned: np.ndarray, gt: np.ndarray, thresholds: Sequence[float],
                 max_dist: float | None = None, max_dist_frac: float = MAX_DIST_FRAC) -> np.ndarray:
    """[T, 4] integer counts (tp_pred, n_pred, tp_gt, n_gt) for one image; pred >= t is positive."""
    gt = np.asarray(gt) > 0
    if max_dist is None:
        max_dist = max_dist_for(gt.shape, max_dist_frac)
    out = np.zeros((len(thresholds), 4), dtype=np.int64)
    prev = None
    for j, t in enumerate(thresholds):
        binary = thinned >= t
        key = int(binary.sum())
        # identical binarizations repeat across thresholds; reuse the match
        if prev is not None and key == prev[0] and np.array_equal(binary, prev[1]):
            out[j] = out[j - 1]
            continue
        out[j] = match_edges(binary, gt, max_dist).as_tuple()
        prev = (key, binary)
    return out


@dataclass
class PRCurve:
    thresholds: np.ndarray
    counts: np.ndarray  # [N_images, T, 4]
    ids: list[str] = field(default_factory=list)

    @property
    def totals(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    def prf(self):
        return prf(*self.totals.T)


def pr_curve(thinned_maps: Sequence[np.ndarray], gt_maps: Sequence[np.ndarray],
             thresholds: Sequence[float] = DEFAULT_THRESHOLDS, max_dist_frac: float = MAX_DIST_FRAC,
             ids: Sequence[str] | None = None) -> PRCurve:
    """Per-image match counts at every threshold, aggregated over the dataset."""
    if len(thinned_maps) != len(gt_maps):
        raise ValueError("need one ground-truth map per prediction")
    thresholds = np.asarray(thresholds, dtype=np.float64)
    counts = np.stack(
        [image_counts(p, g, thresholds, max_dist_frac=max_dist_frac) for p, g in zip(thinned_maps, gt_maps)]
    ) if len(thinned_maps) else np.zeros((0, len(thresholds), 4), dtype=np.int64)
    ids = list(ids) if ids is not None else [str(k) for k in range(len(thinned_maps))]
    return PRCurve(thresholds, counts, ids)


def average_precision(precision: np.ndarray, recall: np.ndarray) -> float:
    """Mean interpolated precision at recall 0.01..1.00; unreachable recall levels count as 0."""
    total = 0.0
    for r in RECALL_GRID:
        reach = recall >= r - 1e-12
        total += float(precision[reach].max()) if reach.any() else 0.0
    return total / len(RECALL_GRID)


def compute_ods_ois_ap(curve: PRCurve) -> dict:
    p, r, f = curve.prf()
    best = int(np.argmax(f))
    per_image = []
    ois_counts = np.zeros(4, dtype=np.int64)
    for i, c in enumerate(curve.counts):
        ip, ir, iff = prf(*c.T)
        j = int(np.argmax(iff))
        ois_counts += c[j]
        per_image.append({
            "id": curve.ids[i] if i < len(curve.ids) else str(i),
            "threshold": float(curve.thresholds[j]),
            "P": float(ip[j]), "R": float(ir[j]), "F": float(iff[j]),
        })
    _, _, ois = prf(*ois_counts)
    return {
        "ODS": float(f[best]),
        "ODS_threshold": float(curve.thresholds[best]),
        "OIS": float(ois),
        "AP": average_precision(p, r),
        "per_image": per_image,
    }
