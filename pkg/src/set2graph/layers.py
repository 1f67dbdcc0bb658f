"""Equivariant building blocks: DeepSets layers, attention pooling, broadcasting, edge MLPs.

Set tensors carry elements on the second-to-last axis and features on the
last axis, so a single set is ``(n, d)`` and a batch of equal-size sets is
``(B, n, d)``. Edge tensors are ``(..., n, n, d)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import tensor as T
from .tensor import ShapeError, Tensor

POOLINGS = ("mean", "sum", "attention")
ACTIVATIONS = ("relu", "none")


class EmptySetError(ValueError):
    pass


def init_uniform(rng: np.random.Generator, fan_in: int, shape: Sequence[int]) -> Tensor:
    bound = 1.0 / math.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=tuple(shape)), requires_grad=True)


def _activate(x: Tensor, activation: str) -> Tensor:
    return T.relu(x) if activation == "relu" else x


def _rowwise(x: Tensor, w: Tensor) -> Tensor:
    """``x @ w`` for any number of leading axes on ``x``."""
    lead = x.shape[:-1]
    y = T.matmul(T.reshape(x, (-1, x.shape[-1])), w)
    return T.reshape(y, lead + (w.shape[1],))


def _add_bias(y: Tensor, b: Tensor) -> Tensor:
    return T.add(y, T.broadcast_to(b, y.shape))


class Linear:
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, bias: bool = True):
        self.d_in, self.d_out = d_in, d_out
        self.weight = init_uniform(rng, d_in, (d_in, d_out))
        self.bias = init_uniform(rng, d_in, (d_out,)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.d_in:
            raise ShapeError(f"Linear expects width {self.d_in}, got {x.shape[-1]}")
        y = _rowwise(x, self.weight)
        return _add_bias(y, self.bias) if self.bias is not None else y

    def parameters(self) -> list[Tensor]:
        return [self.weight] + ([self.bias] if self.bias is not None else [])


class AttentionPool:
    """Self-attention context ``softmax(tanh(x f1) (x f2)^T / sqrt(d_small)) x``."""

    def __init__(self, d: int, rng: np.random.Generator):
        self.d = d
        self.d_small = max(1, d // 10)
        self.f1 = init_uniform(rng, d, (d, self.d_small))
        self.f2 = init_uniform(rng, d, (d, self.d_small))

    def __call__(self, x: Tensor) -> Tensor:
        return attention_pool(x, self)

    def parameters(self) -> list[Tensor]:
        return [self.f1, self.f2]


def attention_pool(x: Tensor, p: AttentionPool) -> Tensor:
    if x.shape[-2] == 0:
        raise EmptySetError("attention_pool on an empty set")
    if x.shape[-1] != p.d:
        raise ShapeError(f"attention_pool expects width {p.d}, got {x.shape[-1]}")
    a = T.tanh(_rowwise(x, p.f1))
    b = _rowwise(x, p.f2)
    scores = T.scale(T.matmul(a, T.transpose_last(b)), 1.0 / math.sqrt(p.d_small))
    return T.matmul(T.softmax_rows(scores), x)


class DeepSetsLayer:
    """``act(x W1 + pool(x) W2 + bias)`` with the pooled context replicated per element."""

    def __init__(
        self,
        d_in: int,
        d_out: int,
        rng: np.random.Generator,
        pooling: str = "mean",
        activation: str = "relu",
    ):
        if pooling not in POOLINGS:
            raise ValueError(f"unknown pooling {pooling!r}")
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.d_in, self.d_out = d_in, d_out
        self.pooling, self.activation = pooling, activation
        self.W1 = init_uniform(rng, d_in, (d_in, d_out))
        self.W2 = init_uniform(rng, d_in, (d_in, d_out))
        self.bias = init_uniform(rng, d_in, (d_out,))
        self.attention = AttentionPool(d_in, rng) if pooling == "attention" else None

    def __call__(self, x: Tensor) -> Tensor:
        return deepsets_forward(x, self)

    def parameters(self) -> list[Tensor]:
        ps = [self.W1, self.W2, self.bias]
        if self.attention is not None:
            ps += self.attention.parameters()
        return ps


def deepsets_forward(x: Tensor, layer: DeepSetsLayer) -> Tensor:
    if x.ndim < 2 or x.shape[-2] == 0:
        raise EmptySetError(f"deepsets_forward needs a non-empty set, got shape {x.shape}")
    if x.shape[-1] != layer.d_in:
        raise ShapeError(f"DeepSetsLayer expects width {layer.d_in}, got {x.shape[-1]}")
    local = _rowwise(x, layer.W1)
    if layer.pooling == "attention":
        context = _rowwise(attention_pool(x, layer.attention), layer.W2)
    else:
        pooled = T.mean(x, -2) if layer.pooling == "mean" else T.sum(x, -2)
        row = _rowwise(pooled, layer.W2)
        lead = row.shape[:-1]
        context = T.broadcast_to(T.reshape(row, lead + (1, layer.d_out)), local.shape)
    y = _add_bias(T.add(local, context), layer.bias)
    return _activate(y, layer.activation)


class Mlp:
    """Stack of affine layers with ReLU between them and none after the last."""

    def __init__(self, d_in: int, widths: Sequence[int], rng: np.random.Generator):
        self.d_in = d_in
        self.widths = list(widths)
        dims = [d_in] + self.widths
        self.layers = [Linear(a, b, rng) for a, b in zip(dims[:-1], dims[1:])]

    @property
    def d_out(self) -> int:
        return self.widths[-1] if self.widths else self.d_in

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.d_in:
            raise ShapeError(f"Mlp expects width {self.d_in}, got {x.shape[-1]}")
        last = len(self.layers) - 1
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < last:
                x = T.relu(x)
        return x

    def parameters(self) -> list[Tensor]:
        return [p for layer in self.layers for p in layer.parameters()]


EdgeMlp = Mlp


def edge_mlp_forward(features: Tensor, mlp: Mlp) -> Tensor:
    """Apply the same MLP to every edge (or triplet) feature vector independently."""
    return mlp(features)


class DeepSetsStack:
    def __init__(
        self,
        d_in: int,
        widths: Sequence[int],
        rng: np.random.Generator,
        pooling: str = "mean",
        final_activation: str = "none",
    ):
        dims = [d_in] + list(widths)
        self.layers = []
        for i, (a, b) in enumerate(zip(dims[:-1], dims[1:])):
            act = "relu" if i < len(widths) - 1 else final_activation
            self.layers.append(DeepSetsLayer(a, b, rng, pooling=pooling, activation=act))
        self.d_in = d_in
        self.d_out = dims[-1]

    def __call__(self, x: Tensor) -> Tensor:
        for layer in self.layers:
            x = layer(x)
        return x

    def parameters(self) -> list[Tensor]:
        return [p for layer in self.layers for p in layer.parameters()]


# ---------------------------------------------------------------------------
# broadcasting


def broadcast_k2_concat(x: Tensor) -> Tensor:
    """``B[..., i, j, :] = [x_i, x_j]``, all ordered pairs including the diagonal."""
    *lead, n, d = x.shape
    lead = tuple(lead)
    full = lead + (n, n, d)
    xi = T.broadcast_to(T.reshape(x, lead + (n, 1, d)), full)
    xj = T.broadcast_to(T.reshape(x, lead + (1, n, d)), full)
    return T.concat_features([xi, xj])


def broadcast_k2_full(x: Tensor) -> Tensor:
    """All five equivariant linear lifts from sets to edges, stacked channel-block-wise.

    Blocks in order: row element, column element, set sum, element on the
    diagonal, set sum on the diagonal.
    """
    *lead, n, d = x.shape
    lead = tuple(lead)
    full = lead + (n, n, d)
    xi = T.broadcast_to(T.reshape(x, lead + (n, 1, d)), full)
    xj = T.broadcast_to(T.reshape(x, lead + (1, n, d)), full)
    total = T.broadcast_to(T.reshape(T.sum(x, -2), lead + (1, 1, d)), full)
    eye = Tensor(np.broadcast_to(np.eye(n)[:, :, None], full))
    return T.concat_features([xi, xj, total, T.mul(xi, eye), T.mul(total, eye)])


def check_triplets(triplets: np.ndarray, n: int) -> np.ndarray:
    triplets = np.asarray(triplets, dtype=np.intp).reshape(-1, 3)
    if triplets.size:
        if triplets.min() < 0 or triplets.max() >= n:
            raise IndexError(f"triplet index out of range for n={n}")
        s = np.sort(triplets, axis=1)
        if np.any(s[:, 0] == s[:, 1]) or np.any(s[:, 1] == s[:, 2]):
            raise ValueError("triplet contains a repeated index")
    return triplets


def broadcast_k3_sparse(x: Tensor, triplets: np.ndarray) -> Tensor:
    """Stack ``(x_i, x_j, x_l)`` per candidate triplet into a ``(T, 3, d)`` tensor."""
    if x.ndim != 2:
        raise ShapeError(f"broadcast_k3_sparse expects (n, d), got {x.shape}")
    triplets = check_triplets(triplets, x.shape[0])
    return T.take_rows(x, triplets)


class TripletHead:
    """Order-invariant triplet scorer: inner DeepSets, max-pool over the 3 rows, then an MLP."""

    def __init__(
        self,
        d_in: int,
        inner_widths: Sequence[int],
        mlp_widths: Sequence[int],
        rng: np.random.Generator,
    ):
        self.inner = DeepSetsStack(d_in, inner_widths, rng, pooling="mean", final_activation="relu")
        self.mlp = Mlp(self.inner.d_out, mlp_widths, rng)
        self.d_in = d_in

    def __call__(self, blocks: Tensor) -> Tensor:
        return symmetric_triplet_head(blocks, self)

    def parameters(self) -> list[Tensor]:
        return self.inner.parameters() + self.mlp.parameters()


def symmetric_triplet_head(blocks: Tensor, head: TripletHead) -> Tensor:
    """Logit per ``(T, 3, d)`` block, invariant to the order of the three rows."""
    if blocks.ndim < 2 or blocks.shape[-2] != 3:
        raise ShapeError(f"triplet blocks must have 3 rows, got shape {blocks.shape}")
    h = T.max(head.inner(blocks), -2)
    out = head.mlp(h)
    return T.reshape(out, out.shape[:-1])


# ---------------------------------------------------------------------------
# permutations


@dataclass(frozen=True)
class Permutation:
    """Element ``i`` moves to position ``mapping[i]``."""

    mapping: tuple[int, ...]

    def __post_init__(self):
        m = tuple(int(i) for i in self.mapping)
        if sorted(m) != list(range(len(m))):
            raise ValueError(f"not a permutation: {self.mapping}")
        object.__setattr__(self, "mapping", m)

    @classmethod
    def random(cls, n: int, rng: np.random.Generator) -> "Permutation":
        return cls(tuple(rng.permutation(n)))

    @classmethod
    def swap(cls, n: int, i: int, j: int) -> "Permutation":
        m = list(range(n))
        m[i], m[j] = m[j], m[i]
        return cls(tuple(m))

    def __len__(self) -> int:
        return len(self.mapping)

    def inverse(self) -> "Permutation":
        inv = [0] * len(self.mapping)
        for i, s in enumerate(self.mapping):
            inv[s] = i
        return Permutation(tuple(inv))

    def compose(self, other: "Permutation") -> "Permutation":
        """``self ∘ other``: apply ``other`` first."""
        return Permutation(tuple(self.mapping[o] for o in other.mapping))

    def _source(self) -> np.ndarray:
        return np.asarray(self.inverse().mapping)

    def act_on_set(self, x: np.ndarray, axis: int = -2) -> np.ndarray:
        """``(σ·X)[σ(i)] = X[i]``."""
        return np.take(np.asarray(x), self._source(), axis=axis)

    def act_on_edges(self, y: np.ndarray, axes: tuple[int, int] = (0, 1)) -> np.ndarray:
        src = self._source()
        y = np.take(np.asarray(y), src, axis=axes[0])
        return np.take(y, src, axis=axes[1])

    def relabel(self, index: np.ndarray) -> np.ndarray:
        """Map element indices (e.g. triplets) to their new positions."""
        return np.asarray(self.mapping)[np.asarray(index, dtype=np.intp)]
