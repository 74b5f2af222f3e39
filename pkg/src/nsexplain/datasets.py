"""Synthetic motif benchmarks and flat-file graph dataset loading.

Three node-classification benchmarks attach labeled motifs (houses, six-node
cycles, 3x3 grids) to a random base graph; the motif edges are the ground
truth an explainer should recover.  Graph-classification corpora load from
the flat text format used by the common benchmark collections (DS_A.txt,
DS_graph_indicator.txt, ...).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import networkx as nx
import numpy as np

from .graphs import SparseGraph, build_instance

FEATURE_DIM = 10


class DataFormatError(ValueError):
    """Raised for malformed dataset files."""


@dataclass
class NodeDataset:
    name: str
    graph: SparseGraph
    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def instance(self, model, node):
        return build_instance(
            self.graph, self.features, "node", model,
            label=int(self.labels[node]), target_node=node,
        )


@dataclass
class GraphDataset:
    name: str
    graphs: list
    features: list
    labels: np.ndarray
    num_classes: int

    def instance(self, model, index):
        return build_instance(
            self.graphs[index], self.features[index], "graph", model,
            label=int(self.labels[index]),
        )


@dataclass
class SyntheticGroundTruth:
    """Per-motif explanation targets plus the dataset's extraction sizes."""

    motifs: list  # [(node_ids tuple, edge tuple of (u, v) pairs), ...]
    k_edges: int
    k_nodes: int

    def nodes(self):
        """All motif node ids (the population explanations are scored on)."""
        out = []
        for node_ids, _ in self.motifs:
            out.extend(node_ids)
        return sorted(out)

    def edges_for(self, node):
        for node_ids, edges in self.motifs:
            if node in node_ids:
                return edges
        raise KeyError(f"node {node} belongs to no motif")

    def nodes_for(self, node):
        for node_ids, _ in self.motifs:
            if node in node_ids:
                return node_ids
        raise KeyError(f"node {node} belongs to no motif")


def _canonical(u, v):
    return (int(min(u, v)), int(max(u, v)))


def _attach_motifs(edges, num_base, motif_nodes, motif_edge_fn, count, rng, labels, motif_labels):
    """Append `count` motifs, each tied to the base by one random edge."""
    motifs = []
    nid = num_base
    for _ in range(count):
        ids = tuple(range(nid, nid + motif_nodes))
        medges = tuple(_canonical(ids[a], ids[b]) for a, b in motif_edge_fn())
        edges.extend(medges)
        edges.append(_canonical(ids[0], int(rng.integers(0, num_base))))
        labels.extend(motif_labels)
        motifs.append((ids, medges))
        nid += motif_nodes
    return motifs, nid


def _house_edges():
    # square 0-1-2-3 plus a roof node 4 over the 0-1 side
    return [(0, 1), (1, 2), (2, 3), (3, 0), (4, 0), (4, 1)]


def _cycle_edges():
    return [(i, (i + 1) % 6) for i in range(6)]


def _grid_edges():
    # 3x3 grid, row-major ids, 12 lattice edges
    out = []
    for r in range(3):
        for c in range(3):
            if c < 2:
                out.append((3 * r + c, 3 * r + c + 1))
            if r < 2:
                out.append((3 * r + c, 3 * (r + 1) + c))
    return out


def _perturb(edges, num_nodes, count, rng):
    """Add `count` fresh random edges between distinct nodes."""
    present = set(map(tuple, edges))
    added = 0
    while added < count:
        u, v = rng.integers(0, num_nodes, size=2)
        if u == v:
            continue
        e = _canonical(u, v)
        if e in present:
            continue
        present.add(e)
        edges.append(e)
        added += 1


def generate_ba_shapes(seed=0):
    """300-node preferential-attachment base plus 80 five-node house motifs.

    Labels: 0 outside, 1 house nodes adjacent to the roof, 2 the remaining
    square corners, 3 the roof.  One tenth of the node count in extra random
    edges is added as perturbation.  700 nodes total.
    """
    rng = np.random.default_rng(seed)
    base = nx.barabasi_albert_graph(300, 5, seed=rng)
    edges = [_canonical(u, v) for u, v in base.edges()]
    labels = [0] * 300
    motifs, total = _attach_motifs(edges, 300, 5, _house_edges, 80, rng, labels, [1, 1, 2, 2, 3])
    assert total == 700
    _perturb(edges, total, total // 10, rng)
    graph = SparseGraph.undirected(total, edges)
    ds = NodeDataset("ba-shapes", graph, np.ones((total, FEATURE_DIM)), np.asarray(labels), 4)
    return ds, SyntheticGroundTruth(motifs, k_edges=6, k_nodes=5)


def generate_tree_cycles(seed=0):
    """Depth-8 balanced binary tree (511 nodes) plus 60 six-node cycles.

    Binary labels: 1 on cycle nodes.  Each cycle hangs off one random tree
    node; that attachment is the only perturbation.  871 nodes total.
    """
    rng = np.random.default_rng(seed)
    tree = nx.balanced_tree(2, 8)
    edges = [_canonical(u, v) for u, v in tree.edges()]
    labels = [0] * 511
    motifs, total = _attach_motifs(edges, 511, 6, _cycle_edges, 60, rng, labels, [1] * 6)
    assert total == 871
    graph = SparseGraph.undirected(total, edges)
    ds = NodeDataset("tree-cycles", graph, np.ones((total, FEATURE_DIM)), np.asarray(labels), 2)
    return ds, SyntheticGroundTruth(motifs, k_edges=6, k_nodes=6)


def generate_tree_grid(seed=0):
    """Depth-8 balanced binary tree plus 80 3x3 grid motifs.

    Binary labels: 1 on grid nodes.  Attachment edge only, no extra noise.
    1231 nodes total.
    """
    rng = np.random.default_rng(seed)
    tree = nx.balanced_tree(2, 8)
    edges = [_canonical(u, v) for u, v in tree.edges()]
    labels = [0] * 511
    motifs, total = _attach_motifs(edges, 511, 9, _grid_edges, 80, rng, labels, [1] * 9)
    assert total == 1231
    graph = SparseGraph.undirected(total, edges)
    ds = NodeDataset("tree-grid", graph, np.ones((total, FEATURE_DIM)), np.asarray(labels), 2)
    return ds, SyntheticGroundTruth(motifs, k_edges=12, k_nodes=9)


GENERATORS = {
    "ba-shapes": generate_ba_shapes,
    "tree-cycles": generate_tree_cycles,
    "tree-grid": generate_tree_grid,
}


def _read_rows(path, dtype, columns):
    if not os.path.exists(path):
        raise DataFormatError(f"missing dataset file: {path}")
    rows = []
    with open(path) as fh:
        for ln, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.replace(",", " ").split()
            if len(parts) != columns:
                raise DataFormatError(f"{path}:{ln}: expected {columns} columns, got {len(parts)}")
            try:
                rows.append([dtype(p) for p in parts])
            except ValueError as exc:
                raise DataFormatError(f"{path}:{ln}: {exc}") from exc
    return np.asarray(rows, dtype=np.int64 if dtype is int else np.float64)


def load_tu_dataset(root, name) -> GraphDataset:
    """Load a graph-classification corpus from flat text files.

    Expects {name}_A.txt (1-indexed edge pairs), {name}_graph_indicator.txt,
    {name}_graph_labels.txt, and optionally {name}_node_labels.txt.  Node
    labels become one-hot features; without them every node gets an all-ones
    vector of width 10.  Graph labels are remapped to 0..C-1 in sorted order.
    """
    base = os.path.join(root, name, name) if os.path.isdir(os.path.join(root, name)) else os.path.join(root, name)
    A = _read_rows(base + "_A.txt", int, 2)
    indicator = _read_rows(base + "_graph_indicator.txt", int, 1).ravel()
    glabels_raw = _read_rows(base + "_graph_labels.txt", int, 1).ravel()
    num_nodes = len(indicator)
    num_graphs = len(glabels_raw)
    if indicator.min() < 1 or indicator.max() > num_graphs:
        raise DataFormatError("graph_indicator ids out of range")
    if np.any(np.diff(indicator) < 0):
        raise DataFormatError("graph_indicator must be nondecreasing")
    if A.size and (A.min() < 1 or A.max() > num_nodes):
        raise DataFormatError("edge endpoint out of node range")
    node_label_path = base + "_node_labels.txt"
    if os.path.exists(node_label_path):
        nlabels = _read_rows(node_label_path, int, 1).ravel()
        if len(nlabels) != num_nodes:
            raise DataFormatError("node label count does not match node count")
        values = np.unique(nlabels)
        lookup = {v: i for i, v in enumerate(values)}
        feats_all = np.zeros((num_nodes, len(values)))
        feats_all[np.arange(num_nodes), [lookup[v] for v in nlabels]] = 1.0
    else:
        feats_all = np.ones((num_nodes, FEATURE_DIM))
    classes = np.unique(glabels_raw)
    label_of = {v: i for i, v in enumerate(classes)}
    labels = np.asarray([label_of[v] for v in glabels_raw], dtype=np.int64)

    first = np.searchsorted(indicator, np.arange(1, num_graphs + 2))
    edge_graph = indicator[A[:, 0] - 1] if A.size else np.zeros(0, dtype=np.int64)
    if A.size and np.any(edge_graph != indicator[A[:, 1] - 1]):
        raise DataFormatError("edge crosses graph boundaries")
    graphs, feats = [], []
    for gi in range(num_graphs):
        lo, hi = first[gi], first[gi + 1]
        n = hi - lo
        if n <= 0:
            raise DataFormatError(f"graph {gi + 1} has no nodes")
        rows = A[edge_graph == gi + 1] - 1 - lo if A.size else np.zeros((0, 2), dtype=np.int64)
        pairs = np.unique(
            np.stack([rows.min(axis=1), rows.max(axis=1)], axis=1), axis=0
        ) if rows.size else rows.reshape(0, 2)
        graphs.append(SparseGraph(int(n), pairs))
        feats.append(feats_all[lo:hi])
    return GraphDataset(name, graphs, feats, labels, len(classes))


def write_ground_truth_json(path, gt: SyntheticGroundTruth):
    payload = {
        "k_edges": gt.k_edges,
        "k_nodes": gt.k_nodes,
        "motifs": [
            {"nodes": list(nodes), "edges": [list(e) for e in edges]}
            for nodes, edges in gt.motifs
        ],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)


def read_ground_truth_json(path) -> SyntheticGroundTruth:
    with open(path) as fh:
        payload = json.load(fh)
    motifs = [
        (tuple(m["nodes"]), tuple(_canonical(u, v) for u, v in m["edges"]))
        for m in payload["motifs"]
    ]
    return SyntheticGroundTruth(motifs, payload["k_edges"], payload["k_nodes"])
