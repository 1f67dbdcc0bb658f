"""Model variants: S2G, S2G+, S2G-k3, SIAM and the flat MLP baseline.

Every variant is ``psi(beta(phi(X)))``. They differ only in how ``phi`` mixes
elements (DeepSets vs. per-element MLP), which broadcast ``beta`` lifts node
features to edges, and what ``psi`` looks like. The MLP baseline ignores the
structure entirely and is here as the non-equivariant reference point.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import tensor as T
from .layers import (
    POOLINGS,
    DeepSetsStack,
    Mlp,
    TripletHead,
    broadcast_k2_concat,
    broadcast_k2_full,
    check_triplets,
)
from .tensor import ShapeError, Tensor

VARIANTS = ("s2g", "s2g_plus", "s2g_k3", "siam", "mlp_baseline")
CHECKPOINT_MAGIC = b"S2GCKPT"
CHECKPOINT_VERSION = 1


class DegenerateSetError(ValueError):
    pass


@dataclass
class ModelConfig:
    variant: str = "s2g"
    d_in: int = 2
    phi_widths: list[int] = field(default_factory=lambda: [64, 64, 64])
    d1: int = 16
    psi_widths: list[int] = field(default_factory=lambda: [64, 1])
    pooling: str = "attention"
    # k=3 only: inner DeepSets over each triplet's three rows
    inner_widths: list[int] = field(default_factory=lambda: [32, 32, 32])
    knn_k: int = 10
    # mlp_baseline only
    max_n: int = 20
    # parameters start as U(-g/sqrt(fan_in), g/sqrt(fan_in)); sqrt(6) keeps ReLU activations at unit scale
    init_gain: float = 1.0
    # subtract the per-set mean from the inputs (translation invariance, still equivariant)
    center: bool = False
    seed: int = 0

    def validate(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.pooling not in POOLINGS:
            raise ValueError(f"pooling must be one of {POOLINGS}, got {self.pooling!r}")
        for name in ("phi_widths", "psi_widths", "inner_widths"):
            widths = getattr(self, name)
            if not widths or any(int(w) <= 0 for w in widths):
                raise ValueError(f"{name} must be a non-empty list of positive ints")
        for name in ("d_in", "d1", "knn_k", "max_n"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.center and self.variant == "siam":
            raise ValueError("center would give siam set-level context; siam scores pairs in isolation")
        if not self.init_gain > 0:
            raise ValueError("init_gain must be positive")
        if self.psi_widths[-1] != 1:
            raise ValueError("psi_widths must end in 1 (one logit per edge)")

    @property
    def k(self) -> int:
        return 3 if self.variant == "s2g_k3" else 2

    @property
    def edge_width(self) -> int:
        if self.variant == "s2g_plus":
            return 5 * self.d1
        if self.variant == "s2g_k3":
            return self.d1
        return 2 * self.d1


@dataclass
class ModelOutput:
    edge_logits: Optional[np.ndarray] = None
    triplets: Optional[np.ndarray] = None
    triplet_logits: Optional[np.ndarray] = None


class Set2Graph:
    """A seeded, immutable-after-construction bundle of parameters plus its forward pass."""

    def __init__(self, config: ModelConfig):
        config.validate()
        self.config = config
        rng = np.random.default_rng(config.seed)
        c = config
        self.phi = None
        self.psi = None
        self.head = None
        if c.variant in ("s2g", "s2g_plus"):
            self.phi = DeepSetsStack(c.d_in, c.phi_widths + [c.d1], rng, pooling=c.pooling)
            self.psi = Mlp(c.edge_width, c.psi_widths, rng)
        elif c.variant == "siam":
            self.phi = Mlp(c.d_in, c.phi_widths + [c.d1], rng)
            self.psi = Mlp(c.edge_width, c.psi_widths, rng)
        elif c.variant == "s2g_k3":
            self.phi = DeepSetsStack(c.d_in, c.phi_widths + [c.d1], rng, pooling=c.pooling)
            self.head = TripletHead(c.d1, c.inner_widths, c.psi_widths, rng)
        else:
            self.psi = Mlp(c.max_n * c.d_in, c.phi_widths + [c.max_n * c.max_n], rng)
        if c.init_gain != 1.0:
            for p in self.parameters():
                p.data *= c.init_gain

    @property
    def variant(self) -> str:
        return self.config.variant

    def parameters(self) -> list[Tensor]:
        """All trainable tensors in declaration order (the checkpoint order)."""
        ps: list[Tensor] = []
        for part in (self.phi, self.psi, self.head):
            if part is not None:
                ps += part.parameters()
        return ps

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    # -- tensor-level forwards (batched, differentiable) ---------------
    def _prepare(self, x: Tensor) -> Tensor:
        if not self.config.center:
            return x
        mu = T.mean(x, axis=-2)
        mu = T.reshape(mu, mu.shape[:-1] + (1, mu.shape[-1]))
        return T.sub(x, T.broadcast_to(mu, x.shape))

    def node_features(self, x: Tensor) -> Tensor:
        return self.phi(self._prepare(x))

    def edge_logits(self, x: Tensor) -> Tensor:
        """``(..., n, n)`` raw logits for a set or a stack of equal-size sets."""
        if self.config.k != 2:
            raise ValueError(f"{self.variant} does not produce edge logits")
        n = x.shape[-2]
        if n < 2:
            raise DegenerateSetError(f"need at least 2 elements, got {n}")
        if x.shape[-1] != self.config.d_in:
            raise ShapeError(f"expected {self.config.d_in} input features, got {x.shape[-1]}")
        x = self._prepare(x)
        if self.variant == "mlp_baseline":
            return self._mlp_logits(x)
        h = self.phi(x)
        b = broadcast_k2_full(h) if self.variant == "s2g_plus" else broadcast_k2_concat(h)
        z = self.psi(b)
        return T.reshape(z, z.shape[:-1])

    def _mlp_logits(self, x: Tensor) -> Tensor:
        c = self.config
        *lead, n, d = x.shape
        lead = tuple(lead)
        if n > c.max_n:
            raise ValueError(f"set size {n} exceeds max_n={c.max_n}")
        padded = np.zeros(lead + (c.max_n, d))
        padded[..., :n, :] = x.data
        # inputs are data, never parameters, so the padded copy needs no graph
        flat = Tensor(padded.reshape(lead + (c.max_n * d,)))
        z = T.reshape(self.psi(flat), lead + (c.max_n, c.max_n))
        if n == c.max_n:
            return z
        key = tuple(slice(None) for _ in lead) + (slice(0, n), slice(0, n))
        return T.crop(z, key)

    def triplet_logits(self, x: Tensor, triplets: np.ndarray) -> Tensor:
        """Logits for candidate triplets.

        ``x`` is ``(n, d)`` or ``(B, n, d)``; for a batch, triplet indices
        address the flattened ``B * n`` rows.
        """
        if self.variant != "s2g_k3":
            raise ValueError(f"{self.variant} does not produce triplet logits")
        h = self.node_features(x)
        flat = T.reshape(h, (-1, h.shape[-1]))
        triplets = check_triplets(triplets, flat.shape[0])
        return self.head(T.take_rows(flat, triplets))


def build_model(config: ModelConfig) -> Set2Graph:
    return Set2Graph(config)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def s2g_forward(x, model: Set2Graph) -> ModelOutput:
    """Edge logits for one set (S2G, S2G+, SIAM or MLP baseline)."""
    with T.no_grad():
        return ModelOutput(edge_logits=model.edge_logits(_as_tensor(x)).data.copy())


siam_forward = s2g_forward
mlp_baseline_forward = s2g_forward


def s2g_k3_forward(x, candidates: np.ndarray, model: Set2Graph) -> ModelOutput:
    x = _as_tensor(x)
    cand = np.asarray(candidates, dtype=np.intp).reshape(-1, 3)
    if cand.size and cand.max() >= x.shape[-2]:
        raise IndexError(f"candidate index {cand.max()} out of range for n={x.shape[-2]}")
    if cand.shape[0] == 0:
        return ModelOutput(triplets=cand, triplet_logits=np.zeros(0))
    with T.no_grad():
        z = model.triplet_logits(x, cand)
    return ModelOutput(triplets=cand, triplet_logits=z.data.copy())


def parameter_count(model) -> int:
    return int(sum(p.data.size for p in model.parameters()))


# ---------------------------------------------------------------------------
# checkpoints
#
# layout: b"S2GCKPT" | u32 version | u32 header length | JSON header | float64 LE payload


def save_checkpoint(model: Set2Graph, path) -> None:
    params = model.parameters()
    header = {
        "config": asdict(model.config),
        "shapes": [list(p.shape) for p in params],
    }
    blob = json.dumps(header, sort_keys=True).encode()
    payload = b"".join(np.ascontiguousarray(p.data, dtype="<f8").tobytes() for p in params)
    Path(path).write_bytes(
        CHECKPOINT_MAGIC + struct.pack("<II", CHECKPOINT_VERSION, len(blob)) + blob + payload
    )


def load_checkpoint(path) -> Set2Graph:
    raw = Path(path).read_bytes()
    if not raw.startswith(CHECKPOINT_MAGIC):
        raise ValueError(f"{path}: not a checkpoint file")
    off = len(CHECKPOINT_MAGIC)
    version, hlen = struct.unpack_from("<II", raw, off)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    off += 8
    header = json.loads(raw[off : off + hlen])
    off += hlen
    model = Set2Graph(ModelConfig(**header["config"]))
    params = model.parameters()
    if [list(p.shape) for p in params] != header["shapes"]:
        raise ValueError(f"{path}: parameter shapes do not match the stored config")
    for p in params:
        nbytes = p.data.size * 8
        p.data[...] = np.frombuffer(raw, dtype="<f8", count=p.data.size, offset=off).reshape(p.shape)
        off += nbytes
    if off != len(raw):
        raise ValueError(f"{path}: trailing bytes after parameters")
    return model


def get_state(model: Set2Graph) -> list[np.ndarray]:
    return [p.data.copy() for p in model.parameters()]


def set_state(model: Set2Graph, state: list[np.ndarray]) -> None:
    for p, s in zip(model.parameters(), state):
        p.data[...] = s
