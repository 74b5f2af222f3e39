"""Sparse graph containers and explicand assembly.

Graphs are stored as a logical edge list (one entry per undirected edge) plus
a derived arc view (two directed arcs per undirected edge) that the
propagation kernels consume.  Masks and gradients live on logical edges; the
arc view keeps an index back into the logical list so per-arc quantities fold
back onto the right mask entry.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

# Node features are plain float64 arrays of shape (num_nodes, dim); no wrapper
# class, validation happens at instance construction.
FeatureMatrix = np.ndarray


class GraphFormatError(ValueError):
    """Raised when an edge list or serialized graph violates the format."""


def _as_edge_array(edges) -> np.ndarray:
    arr = np.asarray(edges, dtype=np.int64)
    if arr.size == 0:
        return arr.reshape(0, 2)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise GraphFormatError(f"edge list must have shape (E, 2), got {arr.shape}")
    return arr


class SparseGraph:
    """Edge-list graph with a cached arc view for message passing.

    Undirected graphs keep one logical entry per edge with endpoints ordered
    (u, v), u < v, rows sorted lexicographically.  Each logical edge expands
    to two arcs; a directed edge (u, v) expands to the single arc "v receives
    from u".  Arc arrays are sorted by receiver so they double as a CSR
    structure.
    """

    def __init__(self, num_nodes, edges, directed=False, edge_weights=None):
        edges = _as_edge_array(edges)
        num_nodes = int(num_nodes)
        if num_nodes <= 0:
            raise GraphFormatError("graph needs at least one node")
        if edges.size:
            if edges.min() < 0 or edges.max() >= num_nodes:
                raise GraphFormatError("edge endpoint out of range")
            if np.any(edges[:, 0] == edges[:, 1]):
                raise GraphFormatError("self-loops are not representable")
        if not directed and edges.size:
            if np.any(edges[:, 0] > edges[:, 1]):
                raise GraphFormatError("undirected edges must be stored as (u, v) with u < v")
            order = np.lexsort((edges[:, 1], edges[:, 0]))
            if not np.array_equal(order, np.arange(len(edges))):
                raise GraphFormatError("undirected edge list must be lexicographically sorted")
            if len(edges) > 1:
                dup = np.all(edges[1:] == edges[:-1], axis=1)
                if np.any(dup):
                    raise GraphFormatError("duplicate edges are not allowed")
        if edge_weights is None:
            edge_weights = np.ones(len(edges))
        edge_weights = np.asarray(edge_weights, dtype=np.float64)
        if edge_weights.shape != (len(edges),):
            raise GraphFormatError("edge_weights must have one entry per logical edge")
        if edge_weights.size and (edge_weights.min() < 0.0 or edge_weights.max() > 1.0):
            raise GraphFormatError("edge weights must lie in [0, 1]")
        self.num_nodes = num_nodes
        self.edges = edges
        self.directed = bool(directed)
        self.edge_weights = edge_weights
        self._arcs = None

    @classmethod
    def undirected(cls, num_nodes, edges, edge_weights=None):
        """Build an undirected graph, canonicalizing endpoint order and row order."""
        edges = _as_edge_array(edges)
        if edges.size:
            lo = np.minimum(edges[:, 0], edges[:, 1])
            hi = np.maximum(edges[:, 0], edges[:, 1])
            edges = np.stack([lo, hi], axis=1)
            order = np.lexsort((edges[:, 1], edges[:, 0]))
            edges = edges[order]
            if edge_weights is not None:
                edge_weights = np.asarray(edge_weights, dtype=np.float64)[order]
        return cls(num_nodes, edges, directed=False, edge_weights=edge_weights)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def arc_view(self):
        """Return (recv, send, edge_id, indptr), arcs sorted by receiver.

        indptr is the CSR row pointer over receivers: the arcs received by
        node v are slots indptr[v]:indptr[v+1].
        """
        if self._arcs is None:
            e = self.edges
            if self.directed:
                recv = e[:, 1].copy()
                send = e[:, 0].copy()
                eid = np.arange(len(e), dtype=np.int64)
            else:
                recv = np.concatenate([e[:, 0], e[:, 1]])
                send = np.concatenate([e[:, 1], e[:, 0]])
                eid = np.concatenate([np.arange(len(e), dtype=np.int64)] * 2)
            order = np.lexsort((send, recv))
            recv, send, eid = recv[order], send[order], eid[order]
            counts = np.bincount(recv, minlength=self.num_nodes)
            indptr = np.zeros(self.num_nodes + 1, dtype=np.int64)
            np.cumsum(counts, out=indptr[1:])
            self._arcs = (recv, send, eid, indptr)
        return self._arcs

    def arc_weights(self, edge_mask=None) -> np.ndarray:
        """Per-arc weights: logical weight times optional mask, broadcast to arcs."""
        w = self.edge_weights if edge_mask is None else self.edge_weights * edge_mask
        _, _, eid, _ = self.arc_view()
        return w[eid]

    def edge_index(self) -> dict:
        """Map (u, v) endpoint tuples to logical edge ids."""
        return {(int(u), int(v)): i for i, (u, v) in enumerate(self.edges)}

    def receptive_distances(self, center: int) -> np.ndarray:
        """BFS hop counts from center, following influence direction.

        For node v the senders listed in its CSR row are exactly the nodes
        whose current representation feeds v's next one, so walking sender
        links outward from the center enumerates its receptive field.
        Unreachable nodes get -1.
        """
        recv, send, _, indptr = self.arc_view()
        dist = np.full(self.num_nodes, -1, dtype=np.int64)
        dist[center] = 0
        frontier = [int(center)]
        d = 0
        while frontier:
            d += 1
            nxt = []
            for x in frontier:
                for a in range(indptr[x], indptr[x + 1]):
                    s = int(send[a])
                    if dist[s] < 0:
                        dist[s] = d
                        nxt.append(s)
            frontier = nxt
        return dist


@dataclass
class Instance:
    """One explicand: graph, features, task, and the frozen model's verdict.

    predicted_label is the argmax of the frozen model on the unmasked inputs,
    fixed at construction; every bound and metric downstream refers to it.
    """

    graph: SparseGraph
    features: FeatureMatrix
    task: str
    model: "GcnParams"  # noqa: F821 - forward ref, avoids import cycle
    predicted_label: int
    probs: np.ndarray
    label: int | None = None
    target_node: int | None = None

    @property
    def num_nodes(self) -> int:
        return self.graph.num_nodes

    @property
    def num_edges(self) -> int:
        return self.graph.num_edges


def build_instance(graph, features, task, model, label=None, target_node=None) -> Instance:
    """Assemble an Instance, running the frozen model once to fix its prediction."""
    from . import model as _model

    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] != graph.num_nodes:
        raise GraphFormatError(
            f"features must be (num_nodes, dim), got {features.shape} for {graph.num_nodes} nodes"
        )
    if not np.all(np.isfinite(features)):
        raise GraphFormatError("features must be finite")
    if features.shape[1] != model.feature_dim:
        raise GraphFormatError(
            f"feature dim {features.shape[1]} does not match model dim {model.feature_dim}"
        )
    if task not in ("graph", "node"):
        raise GraphFormatError(f"unknown task {task!r}")
    if task == "node":
        if target_node is None:
            raise GraphFormatError("node task needs a target_node")
        target_node = int(target_node)
        if not 0 <= target_node < graph.num_nodes:
            raise GraphFormatError("target_node out of range")
    probs, _ = _model.forward(model, graph, graph.arc_weights(), features, task, target_node)
    return Instance(
        graph=graph,
        features=features,
        task=task,
        model=model,
        predicted_label=int(np.argmax(probs)),
        probs=probs,
        label=None if label is None else int(label),
        target_node=target_node,
    )


def khop_subgraph(instance: Instance, k: int, center: int | None = None):
    """Cut the receptive-field subgraph around a node and rebuild the instance.

    Keeps every logical edge with at least one endpoint within k hops of the
    center.  The distance-(k+1) endpoints that ride along preserve the degree
    renormalization of the distance-k boundary, which is what makes the
    center's probabilities on the subgraph match the full graph exactly for a
    k-layer model.

    Returns (sub_instance, mapping) where mapping[new_id] = original id.
    """
    if center is None:
        center = instance.target_node
    if center is None:
        raise GraphFormatError("khop_subgraph needs a center node")
    center = int(center)
    g = instance.graph
    dist = g.receptive_distances(center)
    reach = np.where(dist < 0, np.iinfo(np.int64).max, dist)
    e = g.edges
    if e.size:
        keep = np.minimum(reach[e[:, 0]], reach[e[:, 1]]) <= k
    else:
        keep = np.zeros(0, dtype=bool)
    kept = e[keep]
    node_ids = np.unique(np.concatenate([kept.ravel(), np.array([center], dtype=np.int64)]))
    new_id = np.full(g.num_nodes, -1, dtype=np.int64)
    new_id[node_ids] = np.arange(len(node_ids))
    # relabeling is monotone, so canonical edge order survives untouched
    sub = SparseGraph(
        len(node_ids),
        new_id[kept] if kept.size else kept,
        directed=g.directed,
        edge_weights=g.edge_weights[keep],
    )
    sub_instance = build_instance(
        sub,
        instance.features[node_ids],
        instance.task,
        instance.model,
        label=instance.label,
        target_node=int(new_id[center]) if instance.task == "node" else None,
    )
    return sub_instance, node_ids


def write_graph_json(path, graph: SparseGraph, features, task, label):
    """Serialize one graph with features, task tag, and labels to JSON.

    label is a per-node list for node tasks and a single int for graph tasks.
    Float features round-trip exactly (repr-based JSON floats).
    """
    payload = {
        "num_nodes": graph.num_nodes,
        "edges": [[int(u), int(v)] for u, v in graph.edges],
        "features": np.asarray(features, dtype=np.float64).tolist(),
        "task": task,
        "label": label.tolist() if isinstance(label, np.ndarray) else label,
    }
    if graph.directed:
        payload["directed"] = True
    if not np.all(graph.edge_weights == 1.0):
        payload["edge_weights"] = graph.edge_weights.tolist()
    with open(path, "w") as fh:
        json.dump(payload, fh)


def read_graph_json(path):
    """Inverse of write_graph_json: returns (graph, features, task, label)."""
    with open(path) as fh:
        payload = json.load(fh)
    for field in ("num_nodes", "edges", "features", "task", "label"):
        if field not in payload:
            raise GraphFormatError(f"graph JSON missing field {field!r}")
    graph = SparseGraph(
        payload["num_nodes"],
        payload["edges"],
        directed=payload.get("directed", False),
        edge_weights=payload.get("edge_weights"),
    )
    features = np.asarray(payload["features"], dtype=np.float64)
    label = payload["label"]
    if isinstance(label, list):
        label = np.asarray(label, dtype=np.int64)
    return graph, features, payload["task"], label
