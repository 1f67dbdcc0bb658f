"""Thresholding, clique post-processing and evaluation metrics (plain numpy)."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from math import comb
from typing import Optional

import numpy as np

from .geometry import Partition


@dataclass
class MetricsRecord:
    epoch: int
    split: str
    loss: float = float("nan")
    f1: float = float("nan")
    precision: float = float("nan")
    recall: float = float("nan")
    accuracy: float = float("nan")
    ri: Optional[float] = None
    ari: Optional[float] = None
    auc: Optional[float] = None

    def as_dict(self) -> dict:
        return asdict(self)


def _sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def edge_probabilities(logits: np.ndarray) -> np.ndarray:
    """Sigmoid of the symmetrized logits ``(z + z^T) / 2``."""
    z = np.asarray(logits, dtype=np.float64)
    return _sigmoid(0.5 * (z + np.swapaxes(z, -1, -2)))


def predict_edges(logits: np.ndarray) -> np.ndarray:
    """Symmetrize, squash, threshold strictly above 0.5; diagonal cleared."""
    adj = edge_probabilities(logits) > 0.5
    n = adj.shape[-1]
    adj[..., np.arange(n), np.arange(n)] = False
    return adj


def connected_components_to_cliques(pred: np.ndarray) -> tuple[Partition, np.ndarray]:
    """Union-find components of a symmetric adjacency, closed into cliques."""
    adj = np.asarray(pred, dtype=bool)
    if not np.array_equal(adj, adj.T):
        raise ValueError("adjacency must be symmetric")
    n = adj.shape[0]
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, j in zip(*np.nonzero(np.triu(adj, 1))):
        ri, rj = find(int(i)), find(int(j))
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    part = Partition(np.array([find(i) for i in range(n)]))
    closure = part.labels[:, None] == part.labels[None, :]
    np.fill_diagonal(closure, False)
    return part, closure


def _pairs(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=bool)
    if x.ndim == 2 and x.shape[0] == x.shape[1]:
        return x[np.triu_indices(x.shape[0], 1)]
    return x.ravel()


def f1_precision_recall_accuracy(pred, truth) -> dict:
    """Confusion-matrix scores over unordered pairs (square inputs) or flat label vectors."""
    p, t = _pairs(pred), _pairs(truth)
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch {np.shape(pred)} vs {np.shape(truth)}")
    tp = int(np.sum(p & t))
    fp = int(np.sum(p & ~t))
    fn = int(np.sum(~p & t))
    acc = float(np.mean(p == t)) if p.size else 1.0
    if tp + fp + fn == 0:
        return {"f1": 1.0, "precision": 1.0, "recall": 1.0, "accuracy": acc}
    prec = tp / (tp + fp) if tp + fp else 0.0
    rec = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
    return {"f1": f1, "precision": prec, "recall": rec, "accuracy": acc}


def _labels(p) -> np.ndarray:
    return p.labels if isinstance(p, Partition) else np.asarray(p)


def contingency(p1, p2) -> np.ndarray:
    a, b = _labels(p1), _labels(p2)
    if a.shape != b.shape:
        raise ValueError("partitions cover different element counts")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1 if a.size else 0, bi.max() + 1 if b.size else 0), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)
    return table


def _pair_counts(table: np.ndarray) -> tuple[int, int, int, int]:
    n = int(table.sum())
    same_both = sum(comb(int(v), 2) for v in table.ravel())
    same_a = sum(comb(int(v), 2) for v in table.sum(axis=1))
    same_b = sum(comb(int(v), 2) for v in table.sum(axis=0))
    return n, same_both, same_a, same_b


def rand_index(p1, p2) -> float:
    n, both, sa, sb = _pair_counts(contingency(p1, p2))
    total = comb(n, 2)
    if total == 0:
        return 1.0
    # agreements = pairs together in both + pairs apart in both
    return (total + 2 * both - sa - sb) / total


def adjusted_rand_index(p1, p2) -> float:
    n, both, sa, sb = _pair_counts(contingency(p1, p2))
    total = comb(n, 2)
    if total == 0:
        return 1.0
    expected = sa * sb / total
    max_index = 0.5 * (sa + sb)
    if max_index == expected:
        return 1.0 if np.array_equal(Partition(_labels(p1)).labels, Partition(_labels(p2)).labels) else 0.0
    return (both - expected) / (max_index - expected)


def auc_roc(scores, labels) -> float:
    """Mann-Whitney AUC with midranks for ties."""
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels, dtype=bool).ravel()
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("auc_roc needs both positive and negative labels")
    _, inv, counts = np.unique(s, return_inverse=True, return_counts=True)
    ends = np.cumsum(counts)
    midrank = ends - (counts - 1) / 2.0
    r = midrank[inv]
    return float((r[y].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))
