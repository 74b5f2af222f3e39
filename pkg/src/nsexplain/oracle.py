"""Brute-force references for the necessity/sufficiency bound.

Two independent ways to cross-check the mask optimizer: exact
enumeration of every discrete input subset on instances small enough to
afford it, and exact rational arithmetic on toy two-world outcome
tables. Neither shares code with the sampled estimator, which is the
point.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from .model import forward

MAX_ORACLE_EDGES = 12
MAX_ORACLE_NODES = 12


def _subset_vector(subset, size, what):
    """Normalize a subset given as ids or a boolean mask to a 0/1 float vector."""
    arr = np.asarray(subset)
    if arr.dtype == bool:
        if arr.shape != (size,):
            raise ValueError(f"{what} mask must have length {size}")
        return arr.astype(np.float64)
    ids = arr.astype(np.int64).reshape(-1)
    if ids.size and (ids.min() < 0 or ids.max() >= size):
        raise ValueError(f"{what} ids out of range [0, {size})")
    if len(set(ids.tolist())) != ids.size:
        raise ValueError(f"duplicate {what} ids")
    vec = np.zeros(size)
    vec[ids] = 1.0
    return vec


def _subset_int(vec) -> int:
    return int(np.dot(vec, 1 << np.arange(vec.size, dtype=np.int64)))


def _bits(k: int, size: int) -> np.ndarray:
    return ((k >> np.arange(size, dtype=np.int64)) & 1).astype(np.float64)


def _f_value(model, instance, edge_vec, node_vec=None) -> float:
    arc_w = instance.graph.arc_weights(edge_vec)
    feats = instance.features
    if node_vec is not None:
        feats = feats * node_vec[:, None]
    probs, _ = forward(
        model, instance.graph, arc_w, feats, instance.task,
        target_node=instance.target_node,
    )
    return float(probs[instance.predicted_label])


def enumerate_edge_subset_values(model, instance, node_vec=None) -> np.ndarray:
    """yhat-probability for every edge subset; index k keeps edge j iff bit j of k."""
    m = instance.num_edges
    if m > MAX_ORACLE_EDGES:
        raise ValueError(f"instance has {m} edges; enumeration capped at {MAX_ORACLE_EDGES}")
    values = np.empty(1 << m)
    for k in range(1 << m):
        values[k] = _f_value(model, instance, _bits(k, m), node_vec)
    return values


def oracle_pns_lb(model, instance, edge_subset, node_subset=None,
                  priors=(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)) -> float:
    """Exact bound value of one discrete explanation by full enumeration.

    The complement side conditions on not drawing the explanation
    itself: with a node subset the mixture spreads priors over the three
    sub-events (both differ, edges differ, nodes differ) with each
    sub-event uniform over its subsets; edge-only, it is uniform over
    the other 2^m - 1 edge subsets. Returns max{0, pn + ps - 1}.
    """
    m, n = instance.num_edges, instance.num_nodes
    if m > MAX_ORACLE_EDGES or n > MAX_ORACLE_NODES:
        raise ValueError(
            f"instance has {m} edges / {n} nodes; oracle capped at "
            f"{MAX_ORACLE_EDGES}/{MAX_ORACLE_NODES}"
        )
    if m == 0:
        raise ValueError("oracle needs at least one edge")
    if instance.predicted_label is None:
        raise ValueError("instance has no predicted label")
    edge_vec = _subset_vector(edge_subset, m, "edge")
    kb = _subset_int(edge_vec)

    if node_subset is None:
        values = enumerate_edge_subset_values(model, instance)
        ps = values[kb]
        pn = 1.0 - (values.sum() - ps) / ((1 << m) - 1)
        return max(0.0, pn + ps - 1.0)

    node_vec = _subset_vector(node_subset, n, "node")
    kc = _subset_int(node_vec)
    p = np.asarray(priors, dtype=np.float64)
    if p.shape != (3,) or np.any(p < 0.0) or abs(float(p.sum()) - 1.0) > 1e-9:
        raise ValueError("priors must be three nonnegative values summing to 1")
    table = np.empty(((1 << m), (1 << n)))
    for i in range(1 << m):
        bvec = _bits(i, m)
        for j in range(1 << n):
            table[i, j] = _f_value(model, instance, bvec, _bits(j, n))
    ps = table[kb, kc]
    fix_nodes = table[:, kc].sum()
    fix_edges = table[kb, :].sum()
    mean_both = (table.sum() - fix_nodes - fix_edges + ps) / (
        ((1 << m) - 1) * ((1 << n) - 1)
    )
    mean_edges = (fix_nodes - ps) / ((1 << m) - 1)
    mean_nodes = (fix_edges - ps) / ((1 << n) - 1)
    pn = 1.0 - p[0] * mean_both - p[1] * mean_edges - p[2] * mean_nodes
    return max(0.0, pn + ps - 1.0)


def oracle_best_edge_subset(model, instance):
    """Exhaustively score every edge subset; returns (bitmask, bound value).

    Ties break toward the lower bitmask for determinism.
    """
    values = enumerate_edge_subset_values(model, instance)
    m = instance.num_edges
    others = (values.sum() - values) / ((1 << m) - 1)
    scores = np.maximum(0.0, values - others)
    best = int(np.argmax(scores))
    return best, float(scores[best])


def edge_ids_from_mask_int(k: int, num_edges: int) -> np.ndarray:
    """Decode a subset bitmask into sorted edge ids."""
    return np.flatnonzero(_bits(int(k), num_edges))


def toy_scm_monotone(outcomes, prior) -> bool:
    """Whether no positive-probability state flips the outcome the wrong way.

    A state violates monotonicity when the explanation fails to produce
    yhat but its complement produces it.
    """
    pr = [Fraction(p) for p in prior]
    return all(
        not (not bool(kept) and bool(comp))
        for (kept, comp), p in zip(outcomes, pr)
        if p > 0
    )


def toy_scm_pns(outcomes, prior):
    """Exact PNS and its bound on a finite-state toy causal model.

    outcomes lists, per latent state, the pair (does the explanation
    side produce yhat, does the complement side produce yhat); prior
    weights the states. All arithmetic is exact rational, so the
    Lemma-level facts (bound <= exact, equality under monotonicity) are
    checkable without tolerances. Returns (exact, bound) as Fractions.
    """
    states = [(bool(a), bool(b)) for a, b in outcomes]
    pr = [Fraction(p) for p in prior]
    if len(pr) != len(states):
        raise ValueError("outcome table and prior length differ")
    if not states:
        raise ValueError("outcome table is empty")
    if any(p < 0 for p in pr):
        raise ValueError("prior entries must be nonnegative")
    if sum(pr) != 1:
        raise ValueError("prior must sum to exactly 1")
    exact = sum((p for (kept, comp), p in zip(states, pr) if kept and not comp),
                start=Fraction(0))
    p_suf = sum((p for (kept, _), p in zip(states, pr) if kept), start=Fraction(0))
    p_nec = sum((p for (_, comp), p in zip(states, pr) if not comp), start=Fraction(0))
    inner = p_suf + p_nec - 1
    bound = inner if inner > 0 else Fraction(0)
    if bound > exact:
        raise AssertionError("bound exceeded the exact value; enumeration is wrong")
    if toy_scm_monotone(outcomes, prior) and bound != exact:
        raise AssertionError("bound must be tight under monotonicity")
    return exact, bound
