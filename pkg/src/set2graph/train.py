"""Adam, early stopping, mini-batch training and evaluation."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import tensor as T
from .data import Sample
from .geometry import Partition
from .losses import edge_loss, triplet_loss
from .metrics import (
    MetricsRecord,
    adjusted_rand_index,
    auc_roc,
    connected_components_to_cliques,
    edge_probabilities,
    f1_precision_recall_accuracy,
    predict_edges,
    rand_index,
)
from .models import Set2Graph, get_state, set_state
from .tensor import Tensor

log = logging.getLogger(__name__)

SELECT_METRICS = ("f1", "auc", "ari")


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 32
    max_epochs: int = 60
    patience: int = 20
    loss_weights: list[float] = field(default_factory=lambda: [1.0, 1.0])
    # validation metric that picks the best epoch and drives early stopping
    select_metric: str = "f1"
    seed: int = 0

    def validate(self) -> None:
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be non-negative")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("batch_size and max_epochs must be positive")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if len(self.loss_weights) != 2 or min(self.loss_weights) < 0 or max(self.loss_weights) == 0:
            raise ValueError("loss_weights must be two non-negative reals, not both zero")
        if self.select_metric not in SELECT_METRICS:
            raise ValueError(f"select_metric must be one of {SELECT_METRICS}")


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def like(cls, params: Sequence[np.ndarray]) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState, lr: float) -> None:
    """One bias-corrected Adam update, in place, in list order."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and optimizer state differ in length")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape or p.shape != m.shape:
            raise ValueError(f"shape mismatch: param {p.shape}, grad {g.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


def early_stopping(history: Sequence[float], patience: int) -> bool:
    """True once the best score (first strict maximum) is ``patience`` epochs old."""
    if not history:
        raise ValueError("empty history")
    best = int(np.argmax(history))
    return len(history) - 1 - best >= patience


# ---------------------------------------------------------------------------
# batching


def _groups(samples: Sequence[Sample]) -> list[list[Sample]]:
    """Split a batch into equal-size groups, in order of first appearance."""
    by_n: dict[int, list[Sample]] = {}
    for s in samples:
        by_n.setdefault(s.n, []).append(s)
    return list(by_n.values())


def _group_forward(model: Set2Graph, group: list[Sample], weights: Sequence[float]):
    """Loss tensor plus raw numpy outputs for one equal-size group."""
    x = Tensor(np.stack([s.points for s in group]))
    w_bce, w_f1 = weights
    if model.config.k == 3:
        n = group[0].n
        trips, labels, segs = [], [], []
        for b, s in enumerate(group):
            trips.append(s.triplets + b * n)
            labels.append(s.triplet_labels)
            segs.append(np.full(len(s.triplets), b))
        trip = np.concatenate(trips).astype(np.intp)
        lab = np.concatenate(labels)
        seg = np.concatenate(segs)
        z = model.triplet_logits(x, trip)
        loss = triplet_loss(z, lab, seg, w_bce, w_f1)
        splits = np.cumsum([len(t) for t in trips])[:-1]
        return loss, np.split(z.data, splits)
    y = np.stack([s.adjacency for s in group]).astype(np.float64)
    z = model.edge_logits(x)
    loss = edge_loss(z, y, w_bce, w_f1)
    return loss, list(z.data)


def _batch_loss(model, batch, weights):
    total = None
    outputs = []
    for group in _groups(batch):
        loss, outs = _group_forward(model, group, weights)
        part = T.scale(loss, len(group) / len(batch))
        total = part if total is None else T.add(total, part)
        outputs.extend(zip(group, outs))
    return total, outputs


# ---------------------------------------------------------------------------
# metrics over a list of (sample, raw output)


def score_outputs(task: str, outputs, epoch: int, split: str, loss: float) -> MetricsRecord:
    rows = []
    scores, truths = [], []
    ri, ari = [], []
    for s, out in outputs:
        if s.is_k3:
            prob = 1.0 / (1.0 + np.exp(-out))
            pred = prob > 0.5
            truth = s.triplet_labels
            scores.append(prob)
            truths.append(truth)
        else:
            pred = predict_edges(out)
            truth = s.adjacency
            iu = np.triu_indices(s.n, 1)
            scores.append(edge_probabilities(out)[iu])
            truths.append(truth[iu])
            if task == "partition":
                part, pred = connected_components_to_cliques(pred)
                gt = Partition(s.clusters)
                ri.append(rand_index(part, gt))
                ari.append(adjusted_rand_index(part, gt))
        rows.append(f1_precision_recall_accuracy(pred, truth))
    rec = MetricsRecord(epoch=epoch, split=split, loss=loss)
    for key in ("f1", "precision", "recall", "accuracy"):
        setattr(rec, key, float(np.mean([r[key] for r in rows])))
    if ri:
        rec.ri = float(np.mean(ri))
        rec.ari = float(np.mean(ari))
    sc, tr = np.concatenate(scores), np.concatenate(truths)
    if tr.any() and not tr.all():
        rec.auc = auc_roc(sc, tr)
    return rec


def predict(model: Set2Graph, samples: Sequence[Sample], weights=(1.0, 1.0), chunk: int = 128):
    """Raw outputs per sample plus the mean per-set loss, without recording a graph."""
    outputs = []
    loss_sum = 0.0
    with T.no_grad():
        for i in range(0, len(samples), chunk):
            batch = list(samples[i : i + chunk])
            loss, outs = _batch_loss(model, batch, weights)
            loss_sum += loss.item() * len(batch)
            outputs.extend(outs)
    order = {id(s): k for k, s in enumerate(samples)}
    outputs.sort(key=lambda so: order[id(so[0])])
    return outputs, loss_sum / max(1, len(samples))


def evaluate(model: Set2Graph, samples: Sequence[Sample], epoch: int = 0, split: str = "test", weights=(1.0, 1.0)) -> MetricsRecord:
    if not samples:
        raise ValueError(f"empty {split} split")
    outputs, loss = predict(model, samples, weights)
    return score_outputs(samples[0].task, outputs, epoch, split, loss)


# ---------------------------------------------------------------------------
# training


def _selection_score(rec: MetricsRecord, metric: str) -> float:
    value = getattr(rec, metric)
    # auc is undefined when a split holds a single class; treat as chance
    if value is None:
        return 0.5 if metric == "auc" else 0.0
    return float(value)


@dataclass
class TrainResult:
    best_state: list[np.ndarray]
    best_epoch: int
    history: list[MetricsRecord]
    train_losses: list[float]


def train(
    model: Set2Graph,
    train_set: Sequence[Sample],
    val_set: Optional[Sequence[Sample]],
    cfg: TrainConfig,
    progress=None,
) -> TrainResult:
    """Mini-batch Adam with per-epoch validation and early stopping.

    The validation ``select_metric`` (F1 by default) picks the best epoch;
    without a validation set the training set is re-scored after each epoch. The model
    is left holding the best parameters.
    """
    cfg.validate()
    if not train_set:
        raise ValueError("empty train split")
    task = train_set[0].task
    params = model.parameters()
    state = AdamState.like([p.data for p in params])
    history: list[MetricsRecord] = []
    scores: list[float] = []
    train_losses: list[float] = []
    best_state = get_state(model)
    best_epoch = 0

    for epoch in range(1, cfg.max_epochs + 1):
        rng = np.random.default_rng([cfg.seed, epoch])
        order = rng.permutation(len(train_set))
        epoch_outputs = []
        loss_sum = 0.0
        for start in range(0, len(order), cfg.batch_size):
            batch = [train_set[i] for i in order[start : start + cfg.batch_size]]
            model.zero_grad()
            loss, outs = _batch_loss(model, batch, cfg.loss_weights)
            loss.backward()
            adam_step([p.data for p in params], [p.grad for p in params], state, cfg.learning_rate)
            loss_sum += loss.item() * len(batch)
            epoch_outputs.extend(outs)
        train_loss = loss_sum / len(train_set)
        train_losses.append(train_loss)
        tr = score_outputs(task, epoch_outputs, epoch, "train", train_loss)
        history.append(tr)
        if val_set:
            va = evaluate(model, val_set, epoch, "val", cfg.loss_weights)
            history.append(va)
            selected = va
        else:
            va = None
            # train metrics above come from pre-update forwards; re-score so the
            # selected epoch describes exactly the parameters being kept
            selected = evaluate(model, train_set, epoch, "train", cfg.loss_weights)
        score = _selection_score(selected, cfg.select_metric)
        if not scores or score > max(scores):
            best_state = get_state(model)
            best_epoch = epoch
        scores.append(score)
        msg = f"epoch {epoch:3d} loss {train_loss:.4f} train_f1 {tr.f1:.4f}"
        if va is not None:
            msg += f" val_f1 {va.f1:.4f}"
            if va.auc is not None:
                msg += f" val_auc {va.auc:.4f}"
        log.info(msg)
        if progress is not None:
            progress(msg)
        if early_stopping(scores, cfg.patience):
            break

    set_state(model, best_state)
    return TrainResult(best_state, best_epoch, history, train_losses)
