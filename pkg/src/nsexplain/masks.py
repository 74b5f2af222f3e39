"""Continuous edge/node masks and their sigmoid parameterization."""

from __future__ import annotations

import numpy as np


def sigmoid(x):
    # evaluated piecewise to stay overflow-free on both tails
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class MaskPair:
    """One mask value per logical edge and one per node, everything in [0, 1].

    Optimized masks are sigmoids of unconstrained parameters, so any gradient
    step keeps them inside the box.  Masks can also be built from explicit
    values (imports, tests, all-ones identities); those carry no parameters
    and cannot be stepped.
    """

    def __init__(self, edge_values, node_values, edge_params=None, node_params=None):
        self.edge_values = np.asarray(edge_values, dtype=np.float64)
        self.node_values = np.asarray(node_values, dtype=np.float64)
        for vals in (self.edge_values, self.node_values):
            if vals.size and (vals.min() < 0.0 or vals.max() > 1.0):
                raise ValueError("mask values must lie in [0, 1]")
        self.edge_params = edge_params
        self.node_params = node_params

    @classmethod
    def from_unconstrained(cls, edge_params, node_params=None, num_nodes=None):
        """Masks from raw parameters; node_params=None pins the node mask at ones."""
        edge_params = np.asarray(edge_params, dtype=np.float64)
        if node_params is None:
            if num_nodes is None:
                raise ValueError("need num_nodes when the node mask is pinned")
            node_values = np.ones(num_nodes)
        else:
            node_params = np.asarray(node_params, dtype=np.float64)
            node_values = sigmoid(node_params)
        return cls(sigmoid(edge_params), node_values, edge_params, node_params)

    @classmethod
    def from_values(cls, edge_values, node_values):
        return cls(edge_values, node_values)

    @classmethod
    def ones(cls, instance):
        return cls(np.ones(instance.num_edges), np.ones(instance.num_nodes))

    @classmethod
    def random_init(cls, instance, rng, with_node_mask, scale=0.1):
        """Small symmetric init on the raw parameters: masks start near 0.5."""
        ep = rng.uniform(-scale, scale, size=instance.num_edges)
        np_ = rng.uniform(-scale, scale, size=instance.num_nodes) if with_node_mask else None
        return cls.from_unconstrained(ep, np_, num_nodes=instance.num_nodes)

    @property
    def optimizes_nodes(self) -> bool:
        return self.node_params is not None

    def refresh(self):
        """Recompute values after an in-place parameter update."""
        self.edge_values = sigmoid(self.edge_params)
        if self.node_params is not None:
            self.node_values = sigmoid(self.node_params)

    def chain_to_params(self, d_edge_values, d_node_values):
        """Pull value-space gradients back to raw parameters (sigmoid chain rule)."""
        de = d_edge_values * self.edge_values * (1.0 - self.edge_values)
        if self.node_params is None:
            return de, None
        dn = d_node_values * self.node_values * (1.0 - self.node_values)
        return de, dn


def apply_masks(instance, masks: MaskPair):
    """Hadamard-mask an instance's inputs.

    Returns (arc_weights, masked_features): per-arc weights with the logical
    edge mask folded in, and features with node mask entries scaling rows.
    All-ones masks reproduce the unmasked inputs bit for bit.
    """
    if masks.edge_values.shape != (instance.num_edges,):
        raise ValueError("edge mask length does not match instance")
    if masks.node_values.shape != (instance.num_nodes,):
        raise ValueError("node mask length does not match instance")
    arc_w = instance.graph.arc_weights(masks.edge_values)
    feats = instance.features * masks.node_values[:, None]
    return arc_w, feats


def l1_norm(values) -> float:
    # masks are nonnegative by construction, so the l1 norm is a plain sum
    return float(np.sum(values))


def entropy_sum(values) -> float:
    """Sum of elementwise binary entropies; 0 log 0 evaluates to 0."""
    v = np.asarray(values, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = -v * np.log(v) - (1.0 - v) * np.log(1.0 - v)
    return float(np.sum(np.where((v > 0.0) & (v < 1.0), t, 0.0)))


def entropy_grad(values) -> np.ndarray:
    """d entropy_sum / d values; 0 at saturated entries (subgradient choice)."""
    v = np.asarray(values, dtype=np.float64)
    inner = (v > 0.0) & (v < 1.0)
    out = np.zeros_like(v)
    vi = v[inner]
    out[inner] = np.log((1.0 - vi) / vi)
    return out
