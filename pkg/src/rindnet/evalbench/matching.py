"""One-to-one correspondence between predicted and ground-truth edge pixels."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching


@dataclass(frozen=True)
class MatchCounts:
    tp_pred: int
    n_pred: int
    tp_gt: int
    n_gt: int

    def __add__(self, other: "MatchCounts") -> "MatchCounts":
        return MatchCounts(self.tp_pred + other.tp_pred, self.n_pred + other.n_pred,
                           self.tp_gt + other.tp_gt, self.n_gt + other.n_gt)

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.tp_pred, self.n_pred, self.tp_gt, self.n_gt)


def disk_offsets(max_dist: float) -> np.ndarray:
    """Integer (drow, dcol) offsets with Euclidean length <= max_dist."""
    r = int(math.floor(max_dist))
    dy, dx = np.mgrid[-r:r + 1, -r:r + 1]
    inside = dy * dy + dx * dx <= max_dist * max_dist + 1e-9
    return np.stack([dy[inside], dx[inside]], axis=1)


def tolerance_graph(pred: np.ndarray, gt: np.ndarray, max_dist: float) -> csr_matrix:
    """Sparse [n_pred, n_gt] adjacency of pixel pairs within ``max_dist``.

    Rows follow ``np.nonzero(pred)`` order and columns ``np.nonzero(gt)`` order.
    """
    pred = np.asarray(pred, dtype=bool)
    gt = np.asarray(gt, dtype=bool)
    if pred.shape != gt.shape:
        raise ValueError(f"prediction {pred.shape} and ground truth {gt.shape} differ in shape")
    h, w = gt.shape
    pr, pc = np.nonzero(pred)
    gr, gc = np.nonzero(gt)
    gt_index = np.full(gt.shape, -1, dtype=np.int64)
    gt_index[gr, gc] = np.arange(gr.size)
    rows, cols = [], []
    for dy, dx in disk_offsets(max_dist):
        r, c = pr + dy, pc + dx
        ok = (r >= 0) & (r < h) & (c >= 0) & (c < w)
        idx = np.full(pr.shape, -1, dtype=np.int64)
        idx[ok] = gt_index[r[ok], c[ok]]
        hit = idx >= 0
        rows.append(np.nonzero(hit)[0])
        cols.append(idx[hit])
    rows = np.concatenate(rows) if rows else np.empty(0, dtype=np.int64)
    cols = np.concatenate(cols) if cols else np.empty(0, dtype=np.int64)
    data = np.ones(rows.size, dtype=np.int8)
    return csr_matrix((data, (rows, cols)), shape=(pr.size, gr.size))


def match_edges(pred: np.ndarray, gt: np.ndarray, max_dist: float) -> MatchCounts:
    """Maximum one-to-one matching of pred/GT pixels at distance <= ``max_dist``.

    ``pred`` and ``gt`` are boolean masks of the same shape.
    """
    if max_dist < 0:
        raise ValueError("max_dist must be non-negative")
    graph = tolerance_graph(pred, gt, max_dist)
    n_pred, n_gt = graph.shape
    if graph.nnz == 0:
        return MatchCounts(0, n_pred, 0, n_gt)
    # Hopcroft-Karp; entry i is the GT column matched to pred row i, or -1
    assignment = maximum_bipartite_matching(graph, perm_type="column")
    matched = int((assignment >= 0).sum())
    return MatchCounts(matched, n_pred, matched, n_gt)
