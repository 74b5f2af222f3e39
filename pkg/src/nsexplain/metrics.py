"""Fidelity, characterization, and accuracy scoring for explanation masks.

Fidelity asks two counterfactual questions of the frozen model: does the
prediction collapse when the explanation is removed (Fid+), and does it
survive when only the explanation is kept (Fid-)?  Both are means of
argmax-change indicators over a population of instances.  charact folds
the pair into one harmonic score.  Top-K accuracy and ROC-AUC grade mask
rankings against annotated ground-truth edges.  All scorers accept masks
from this package or imported from its JSON export format, so external
methods can be graded on the same scale.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, fields

import numpy as np
from scipy.stats import rankdata

from .explain import rank_top_k
from .graphs import Instance
from .model import forward

__all__ = [
    "MetricReport",
    "fidelity",
    "charact",
    "topk_accuracy",
    "roc_auc",
    "score_explanations",
    "mask_arrays_from_export",
    "aggregate_reports",
    "write_report_csv",
]


@dataclass
class MetricReport:
    """One population's scores; accuracy fields are None without ground truth."""

    fid_plus_c: float
    fid_minus_c: float
    charact_c: float
    fid_plus_d: float
    fid_minus_d: float
    charact_d: float
    topk_accuracy: float | None
    roc_auc: float | None
    N: int

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _split_masks(masks, instance: Instance):
    """Normalize one mask argument to (edge_values, node_values_or_None).

    Accepts a MaskPair (its node channel counts only when optimized), a
    (edge, node) tuple with node possibly None, or a bare edge vector.
    """
    node = None
    if hasattr(masks, "edge_values"):
        edge = masks.edge_values
        if getattr(masks, "optimizes_nodes", True):
            node = masks.node_values
    elif isinstance(masks, tuple):
        edge, node = masks
    else:
        edge = masks
    edge = np.asarray(edge, dtype=np.float64)
    if edge.shape != (instance.num_edges,):
        raise ValueError(
            f"edge mask length {edge.shape} does not match instance "
            f"({instance.num_edges} edges)"
        )
    if node is not None:
        node = np.asarray(node, dtype=np.float64)
        if node.shape != (instance.num_nodes,):
            raise ValueError(
                f"node mask length {node.shape} does not match instance "
                f"({instance.num_nodes} nodes)"
            )
    return edge, node


def _predict(model, instance: Instance, edge_keep, node_keep, baseline):
    """Argmax label under keep-weighted inputs.

    node_keep=None leaves the feature matrix untouched; otherwise kept
    rows stay and removed rows are cross-faded to the baseline fill.
    """
    arc_w = instance.graph.arc_weights(edge_keep)
    feats = instance.features
    if node_keep is not None:
        feats = feats * node_keep[:, None] + baseline * (1.0 - node_keep)[:, None]
    probs, _ = forward(
        model, instance.graph, arc_w, feats, instance.task,
        target_node=instance.target_node,
    )
    return int(np.argmax(probs))


def _binarize(values):
    return (np.asarray(values, dtype=np.float64) > 0.5).astype(np.float64)


def fidelity(model, instances, masks, baseline_features=None, discrete=False):
    """(Fid+, Fid-) over a population.

    Fid+ removes the explanation: complement edge weights 1-M_e, and for
    joint masks explained feature rows cross-faded to the baseline fill
    (default zeros).  Fid- keeps only the explanation.  Edge-only masks
    never touch features: an absent feature mask explains no features,
    so there is nothing to remove in either direction.  discrete=True
    thresholds masks at 0.5 first.
    """
    instances = list(instances)
    masks = list(masks)
    if len(instances) != len(masks):
        raise ValueError(
            f"{len(instances)} instances but {len(masks)} mask sets"
        )
    if not instances:
        raise ValueError("fidelity needs at least one instance")
    kept = removed = 0
    for inst, mk in zip(instances, masks):
        edge, node = _split_masks(mk, inst)
        if discrete:
            edge = _binarize(edge)
            node = _binarize(node) if node is not None else None
        if baseline_features is None:
            fill = np.zeros_like(inst.features)
        else:
            fill = np.broadcast_to(
                np.asarray(baseline_features, dtype=np.float64), inst.features.shape
            )
        yhat = inst.predicted_label
        inv_node = (1.0 - node) if node is not None else None
        removed += _predict(model, inst, 1.0 - edge, inv_node, fill) == yhat
        kept += _predict(model, inst, edge, node, fill) == yhat
    n = len(instances)
    return 1.0 - removed / n, 1.0 - kept / n


def charact(fid_plus: float, fid_minus: float) -> float:
    """Harmonic combination of Fid+ and (1 - Fid-); 0 when the sum is 0."""
    if not (0.0 <= fid_plus <= 1.0 and 0.0 <= fid_minus <= 1.0):
        raise ValueError("fidelity inputs must lie in [0, 1]")
    denom = fid_plus + (1.0 - fid_minus)
    if denom == 0.0:
        return 0.0
    return 2.0 * fid_plus * (1.0 - fid_minus) / denom


def topk_accuracy(masks, ground_truth, k: int) -> float:
    """Mean per-instance |top-K mask edges ∩ gt| / min(K, |gt|).

    masks are edge-weight vectors; ground_truth holds the matching gt
    edge indices per instance.  Ties in the ranking break toward lower
    edge id.  The min(K, |gt|) normalizer keeps instances with small
    annotations from being penalized for the fixed K.
    """
    if int(k) < 1:
        raise ValueError("k must be >= 1")
    masks = list(masks)
    ground_truth = list(ground_truth)
    if len(masks) != len(ground_truth):
        raise ValueError("one ground-truth set per mask required")
    if not masks:
        raise ValueError("topk_accuracy needs at least one instance")
    scores = []
    for weights, gt in zip(masks, ground_truth):
        weights = np.asarray(weights, dtype=np.float64)
        gt = set(int(e) for e in gt)
        if not gt:
            raise ValueError("empty ground-truth edge set")
        kk = min(int(k), weights.size)
        top = rank_top_k(weights, kk)
        scores.append(len(gt.intersection(top.tolist())) / min(int(k), len(gt)))
    return float(np.mean(scores))


def roc_auc(masks, ground_truth) -> float:
    """Mean per-instance rank AUC of gt edges over the rest, ties count 1/2.

    Raises on degenerate instances (no positives or no negatives), since
    an AUC is undefined there.
    """
    masks = list(masks)
    ground_truth = list(ground_truth)
    if len(masks) != len(ground_truth):
        raise ValueError("one ground-truth set per mask required")
    if not masks:
        raise ValueError("roc_auc needs at least one instance")
    aucs = []
    for weights, gt in zip(masks, ground_truth):
        weights = np.asarray(weights, dtype=np.float64)
        labels = np.zeros(weights.size, dtype=bool)
        labels[list(int(e) for e in gt)] = True
        npos = int(labels.sum())
        nneg = int(weights.size - npos)
        if npos == 0 or nneg == 0:
            raise ValueError(
                f"degenerate labels: {npos} positive, {nneg} negative edges"
            )
        ranks = rankdata(weights)
        aucs.append(
            (float(ranks[labels].sum()) - npos * (npos + 1) / 2.0) / (npos * nneg)
        )
    return float(np.mean(aucs))


def score_explanations(model, instances, masks, ground_truth=None, k=None,
                       baseline_features=None) -> MetricReport:
    """Assemble the full report for one population.

    ground_truth (per-instance gt edge indices) and k unlock the accuracy
    fields; without them those fields are None.
    """
    instances = list(instances)
    masks = list(masks)
    fp_c, fm_c = fidelity(model, instances, masks, baseline_features)
    fp_d, fm_d = fidelity(model, instances, masks, baseline_features, discrete=True)
    topk = auc = None
    if ground_truth is not None:
        if k is None:
            raise ValueError("ground truth given but no k for top-K accuracy")
        edge_masks = [_split_masks(mk, inst)[0] for mk, inst in zip(masks, instances)]
        topk = topk_accuracy(edge_masks, ground_truth, k)
        auc = roc_auc(edge_masks, ground_truth)
    return MetricReport(
        fid_plus_c=fp_c,
        fid_minus_c=fm_c,
        charact_c=charact(fp_c, fm_c),
        fid_plus_d=fp_d,
        fid_minus_d=fm_d,
        charact_d=charact(fp_d, fm_d),
        topk_accuracy=topk,
        roc_auc=auc,
        N=len(instances),
    )


def mask_arrays_from_export(payload: dict, instance: Instance):
    """(edge_values, node_values_or_None) from an exported explanation payload.

    Accepts the dict produced by the explainer's JSON export (or any tool
    emitting the same keys) and validates lengths against the instance.
    A payload whose node channel was never optimized (optimizes_nodes
    false, or no node_mask at all) yields node=None so fidelity treats
    it as edge-only.
    """
    edge = np.asarray(payload["edge_mask"], dtype=np.float64)
    node = payload.get("node_mask")
    if not payload.get("optimizes_nodes", node is not None):
        node = None
    node = None if node is None else np.asarray(node, dtype=np.float64)
    if edge.shape != (instance.num_edges,):
        raise ValueError(
            f"imported edge mask has {edge.size} entries, instance has "
            f"{instance.num_edges} edges"
        )
    if node is not None and node.shape != (instance.num_nodes,):
        raise ValueError(
            f"imported node mask has {node.size} entries, instance has "
            f"{instance.num_nodes} nodes"
        )
    return edge, node


def aggregate_reports(reports):
    """Per-metric mean and normal 95% half-width over repeated-seed reports."""
    reports = list(reports)
    if not reports:
        raise ValueError("nothing to aggregate")
    out = {}
    for f in fields(MetricReport):
        if f.name == "N":
            continue
        vals = [getattr(r, f.name) for r in reports]
        if any(v is None for v in vals):
            out[f.name] = (None, None)
            continue
        arr = np.asarray(vals, dtype=np.float64)
        mean = float(arr.mean())
        if arr.size > 1:
            half = 1.96 * float(arr.std(ddof=1)) / math.sqrt(arr.size)
        else:
            half = 0.0
        out[f.name] = (mean, half)
    return out

def write_report_csv(path, dataset: str, method: str, aggregated, n: int):
    """One CSV row per metric: dataset, method, metric, mean, half_width, n."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["dataset", "method", "metric", "mean", "half_width_95", "n"])
        for metric, (mean, half) in aggregated.items():
            if mean is None:
                continue
            w.writerow([dataset, method, metric,
                        f"{mean:.6f}", f"{half:.6f}", n])
    return path
