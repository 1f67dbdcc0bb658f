"""Differentiable losses over edge grids and sparse triplet lists.

Edge losses take logits of shape ``(n, n)`` or ``(B, n, n)`` and ignore the
diagonal. Each set's loss is the mean over its own off-diagonal entries, and
a batch loss is the mean over sets, so large sets do not dominate.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import ShapeError, Tensor


def bce_with_logits(z: Tensor, y: np.ndarray) -> Tensor:
    """Elementwise ``-[y log s(z) + (1-y) log(1-s(z))]`` in the overflow-free form."""
    y = np.asarray(y, dtype=np.float64)
    if y.shape != z.shape:
        raise ShapeError(f"labels {y.shape} do not match logits {z.shape}")
    zd = z.data
    out = np.maximum(zd, 0.0) - zd * y + np.log1p(np.exp(-np.abs(zd)))
    e = np.exp(-np.abs(zd))
    sig = np.where(zd >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return Tensor._from_op(out, (z,), lambda g: (g * (sig - y),))


def _as_batch(z: Tensor, labels) -> tuple[Tensor, np.ndarray, np.ndarray, bool]:
    y = np.asarray(labels, dtype=np.float64)
    if y.shape != z.shape:
        raise ShapeError(f"labels {y.shape} do not match logits {z.shape}")
    single = z.ndim == 2
    n = z.shape[-1]
    if z.shape[-2] != n:
        raise ShapeError(f"edge grid must be square, got {z.shape}")
    b = 1 if single else z.shape[0]
    zf = T.reshape(z, (b, n * n))
    yf = y.reshape(b, n * n)
    mask = np.broadcast_to((1.0 - np.eye(n)).reshape(1, n * n), (b, n * n))
    return zf, yf, mask, single


def _masked_set_mean(elem: Tensor, mask: np.ndarray) -> Tensor:
    """Per-row mean of ``elem`` over mask entries, then mean over rows."""
    counts = mask.sum(axis=1)
    weights = mask / (np.maximum(counts, 1.0)[:, None] * mask.shape[0])
    return T.total(T.mul(elem, Tensor(weights)))


def bce_edge_loss(logits: Tensor, labels) -> Tensor:
    zf, yf, mask, _ = _as_batch(logits, labels)
    return _masked_set_mean(bce_with_logits(zf, yf), mask)


def _soft_f1_rows(pf: Tensor, yf: np.ndarray, mask: np.ndarray) -> Tensor:
    """``mean_rows(1 - 2 sum(p y) / (sum p + sum y))`` with 0/0 rows scored 0."""
    tp = T.sum(T.mul(pf, Tensor(yf * mask)), -1)
    sp = T.sum(T.mul(pf, Tensor(mask)), -1)
    sy = (yf * mask).sum(axis=1)
    empty = (sp.data + sy) == 0
    denom = T.add(sp, Tensor(sy + empty))
    ratio = T.div(tp, denom)
    per_set = T.mul(T.add_scalar(T.scale(ratio, -2.0), 1.0), Tensor((~empty).astype(float)))
    return T.scale(T.total(per_set), 1.0 / per_set.shape[0])


def soft_f1_loss(probs: Tensor, labels) -> Tensor:
    pf, yf, mask, _ = _as_batch(probs, labels)
    return _soft_f1_rows(pf, yf, mask)


def edge_loss(logits: Tensor, labels, w_bce: float = 1.0, w_f1: float = 1.0) -> Tensor:
    """Weighted sum of edge BCE and soft-F1 on the same logits."""
    parts = []
    if w_bce:
        parts.append(T.scale(bce_edge_loss(logits, labels), w_bce))
    if w_f1:
        parts.append(T.scale(soft_f1_loss(T.sigmoid(logits), labels), w_f1))
    out = parts[0]
    for p in parts[1:]:
        out = T.add(out, p)
    return out


# ---------------------------------------------------------------------------
# triplets


def _segment_matrix(segments, size: int) -> np.ndarray:
    if segments is None:
        return np.ones((1, size))
    seg = np.asarray(segments, dtype=np.intp)
    if seg.shape != (size,):
        raise ShapeError(f"segments {seg.shape} do not match {size} logits")
    m = np.zeros((int(seg.max()) + 1 if size else 0, size))
    m[seg, np.arange(size)] = 1.0
    return m


def triplet_bce_loss(logits: Tensor, labels, segments=None) -> Tensor:
    """Mean BCE per set of candidates (``segments`` gives the set id of each), then mean over sets."""
    y = np.asarray(labels, dtype=np.float64)
    s = _segment_matrix(segments, logits.shape[0])
    elem = T.reshape(bce_with_logits(logits, y), (-1, 1))
    w = s / (np.maximum(s.sum(axis=1, keepdims=True), 1.0) * s.shape[0])
    return T.total(T.matmul(Tensor(w), elem))


def triplet_soft_f1_loss(probs: Tensor, labels, segments=None) -> Tensor:
    y = np.asarray(labels, dtype=np.float64)
    s = _segment_matrix(segments, probs.shape[0])
    p = T.reshape(probs, (-1, 1))
    tp = T.reshape(T.matmul(Tensor(s * y[None, :]), p), (-1,))
    sp = T.reshape(T.matmul(Tensor(s), p), (-1,))
    sy = s @ y
    empty = (sp.data + sy) == 0
    ratio = T.div(tp, T.add(sp, Tensor(sy + empty)))
    per_set = T.mul(T.add_scalar(T.scale(ratio, -2.0), 1.0), Tensor((~empty).astype(float)))
    return T.scale(T.total(per_set), 1.0 / per_set.shape[0])


def triplet_loss(logits: Tensor, labels, segments=None, w_bce: float = 1.0, w_f1: float = 1.0) -> Tensor:
    parts = []
    if w_bce:
        parts.append(T.scale(triplet_bce_loss(logits, labels, segments), w_bce))
    if w_f1:
        parts.append(T.scale(triplet_soft_f1_loss(T.sigmoid(logits), labels, segments), w_f1))
    out = parts[0]
    for p in parts[1:]:
        out = T.add(out, p)
    return out
