"""Full-batch cross-entropy training for the fixed GCN."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import model as _model
from .optim import Adam


class TrainingDiverged(RuntimeError):
    """Loss went non-finite; carries the epoch it happened at."""


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 2000
    weight_decay: float = 0.0
    dropout: float = 0.0
    train_fraction: float = 0.8
    seed: int = 0

    def validate(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be nonnegative")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie in (0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be nonnegative")
        return self


@dataclass
class TrainResult:
    train_accuracy: float
    test_accuracy: float
    train_indices: np.ndarray
    test_indices: np.ndarray
    curve: list = field(default_factory=list)  # rows: (epoch, loss, train_acc, test_acc)


def write_curve_csv(path, curve):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "loss", "train_acc", "test_acc"])
        w.writerows(curve)


def _dropout_masks(rng, n, p):
    if p <= 0.0:
        return None
    # inverted dropout: scaling happens at train time, eval passes use none
    return tuple((rng.random((n, h)) >= p) / (1.0 - p) for h in _model.HIDDEN_DIMS)


def _split(rng, count, fraction):
    perm = rng.permutation(count)
    n_train = int(round(fraction * count))
    n_train = min(max(n_train, 1), count - 1)
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def train(dataset, config: TrainConfig):
    """Train on a node- or graph-classification dataset.

    Full-batch Adam on the cross-entropy of the training split; deterministic
    for a fixed seed.  Returns (GcnParams, TrainResult); the returned weights
    are frozen (read-only arrays).
    """
    config.validate()
    from .datasets import GraphDataset, NodeDataset

    if isinstance(dataset, NodeDataset):
        return _train_node(dataset, config)
    if isinstance(dataset, GraphDataset):
        return _train_graph(dataset, config)
    raise TypeError(f"cannot train on {type(dataset).__name__}")


def _train_node(dataset, config):
    init_rng, drop_rng, split_rng = (
        np.random.default_rng(s) for s in np.random.SeedSequence(config.seed).spawn(3)
    )
    g = dataset.graph
    X = dataset.features
    labels = dataset.labels
    n = g.num_nodes
    params = _model.init_params(X.shape[1], dataset.num_classes, init_rng)
    train_idx, test_idx = _split(split_rng, n, config.train_fraction)
    onehot = np.zeros((len(train_idx), dataset.num_classes))
    onehot[np.arange(len(train_idx)), labels[train_idx]] = 1.0
    arrays = [params.w1, params.b1, params.w2, params.b2, params.w3, params.b3, params.wr, params.br]
    opt = Adam([a.shape for a in arrays], lr=config.learning_rate)
    arc_w = g.arc_weights()
    curve = []
    for epoch in range(config.epochs):
        drops = _dropout_masks(drop_rng, n, config.dropout)
        logits, tape = _model.forward_all_nodes(params, g, arc_w, X, drops)
        p = _model.softmax(logits[train_idx])
        loss = -np.mean(np.log(np.clip(p[np.arange(len(train_idx)), labels[train_idx]], 1e-300, None)))
        if not np.isfinite(loss):
            raise TrainingDiverged(f"non-finite loss at epoch {epoch}")
        d_logits = np.zeros_like(logits)
        d_logits[train_idx] = (p - onehot) / len(train_idx)
        _, _, grads = _model.backward_from_logits(tape, params, d_logits)
        glist = [grads.w1, grads.b1, grads.w2, grads.b2, grads.w3, grads.b3, grads.wr, grads.br]
        if config.weight_decay:
            glist = [gr + config.weight_decay * a for gr, a in zip(glist, arrays)]
        opt.step(arrays, glist)
        if drops is not None:
            logits, _ = _model.forward_all_nodes(params, g, arc_w, X, None)
        pred = np.argmax(logits, axis=1)
        curve.append(
            (
                epoch,
                float(loss),
                float(np.mean(pred[train_idx] == labels[train_idx])),
                float(np.mean(pred[test_idx] == labels[test_idx])),
            )
        )
    logits, _ = _model.forward_all_nodes(params, g, arc_w, X, None)
    pred = np.argmax(logits, axis=1)
    result = TrainResult(
        train_accuracy=float(np.mean(pred[train_idx] == labels[train_idx])),
        test_accuracy=float(np.mean(pred[test_idx] == labels[test_idx])),
        train_indices=train_idx,
        test_indices=test_idx,
        curve=curve,
    )
    return params.freeze(), result


def _train_graph(dataset, config):
    init_rng, drop_rng, split_rng = (
        np.random.default_rng(s) for s in np.random.SeedSequence(config.seed).spawn(3)
    )
    graphs, feats, labels = dataset.graphs, dataset.features, np.asarray(dataset.labels)
    params = _model.init_params(feats[0].shape[1], dataset.num_classes, init_rng)
    train_idx, test_idx = _split(split_rng, len(graphs), config.train_fraction)
    arrays = [params.w1, params.b1, params.w2, params.b2, params.w3, params.b3, params.wr, params.br]
    opt = Adam([a.shape for a in arrays], lr=config.learning_rate)
    arc_ws = [g.arc_weights() for g in graphs]

    def accuracy(idx):
        hits = 0
        for i in idx:
            probs, _ = _model.forward(params, graphs[i], arc_ws[i], feats[i], "graph")
            hits += int(np.argmax(probs)) == labels[i]
        return hits / len(idx)

    curve = []
    for epoch in range(config.epochs):
        loss = 0.0
        acc = [np.zeros_like(a) for a in arrays]
        hits = 0
        for i in train_idx:
            drops = _dropout_masks(drop_rng, graphs[i].num_nodes, config.dropout)
            probs, tape = _model.forward(params, graphs[i], arc_ws[i], feats[i], "graph", dropout_masks=drops)
            loss -= np.log(max(probs[labels[i]], 1e-300))
            hits += int(np.argmax(probs)) == labels[i]
            d_logits = probs.copy()
            d_logits[labels[i]] -= 1.0
            _, _, grads = _model.backward_from_logits(tape, params, d_logits / len(train_idx))
            for a, gr in zip(acc, [grads.w1, grads.b1, grads.w2, grads.b2, grads.w3, grads.b3, grads.wr, grads.br]):
                a += gr
        loss /= len(train_idx)
        if not np.isfinite(loss):
            raise TrainingDiverged(f"non-finite loss at epoch {epoch}")
        if config.weight_decay:
            acc = [gr + config.weight_decay * a for gr, a in zip(acc, arrays)]
        opt.step(arrays, acc)
        # train accuracy from the dropout pass; test accuracy clean
        curve.append((epoch, float(loss), hits / len(train_idx), accuracy(test_idx)))
    result = TrainResult(
        train_accuracy=accuracy(train_idx),
        test_accuracy=accuracy(test_idx),
        train_indices=train_idx,
        test_indices=test_idx,
        curve=curve,
    )
    return params.freeze(), result


def evaluate_accuracy(params, instances) -> float:
    """Fraction of instances whose argmax under params matches their label."""
    hits = 0
    for inst in instances:
        if inst.label is None:
            raise ValueError("instance has no label to score against")
        probs, _ = _model.forward(
            params, inst.graph, inst.graph.arc_weights(), inst.features, inst.task, inst.target_node
        )
        hits += int(np.argmax(probs)) == inst.label
    return hits / len(instances)
