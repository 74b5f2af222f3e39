import csv

import numpy as np
import pytest

from nsexplain.datasets import GraphDataset, NodeDataset
from nsexplain.graphs import SparseGraph
from nsexplain.training import (
    TrainConfig,
    TrainingDiverged,
    train,
    write_curve_csv,
)


def _separable_node_dataset():
    """Two star graphs joined by a bridge; label = which star a node sits in.

    Features already separate the classes, so a few hundred epochs of
    full-batch Adam must push accuracy well above chance.
    """
    edges = [(0, i) for i in range(1, 6)] + [(6, i) for i in range(7, 12)]
    edges.append((0, 6))
    g = SparseGraph(12, sorted(edges))
    rng = np.random.default_rng(0)
    feats = rng.normal(size=(12, 4)) * 0.1
    labels = np.array([0] * 6 + [1] * 6)
    feats[:, 0] += np.where(labels == 0, 1.0, -1.0)
    return NodeDataset("two-stars", g, feats, labels, num_classes=2)


def _separable_graph_dataset(num=12):
    """Triangles vs 3-paths with a class-coded feature column."""
    rng = np.random.default_rng(1)
    graphs, feats, labels = [], [], []
    for i in range(num):
        label = i % 2
        g = SparseGraph(3, [(0, 1), (0, 2), (1, 2)] if label else [(0, 1), (1, 2)])
        x = rng.normal(size=(3, 4)) * 0.1
        x[:, 1] += 1.0 if label else -1.0
        graphs.append(g)
        feats.append(x)
        labels.append(label)
    return GraphDataset("tri-vs-path", graphs, feats, np.array(labels), num_classes=2)


class TestTrainConfig:
    def test_validate_returns_self(self):
        cfg = TrainConfig()
        assert cfg.validate() is cfg

    @pytest.mark.parametrize(
        "field,value,msg",
        [
            ("learning_rate", 0.0, "learning_rate"),
            ("epochs", -1, "epochs"),
            ("dropout", 1.0, "dropout"),
            ("train_fraction", 0.0, "train_fraction"),
            ("train_fraction", 1.0, "train_fraction"),
            ("weight_decay", -0.1, "weight_decay"),
        ],
    )
    def test_rejects_bad_values(self, field, value, msg):
        cfg = TrainConfig(**{field: value})
        with pytest.raises(ValueError, match=msg):
            cfg.validate()


class TestNodeTraining:
    def test_accuracy_improves_on_separable_data(self):
        ds = _separable_node_dataset()
        params, res = train(ds, TrainConfig(epochs=300, learning_rate=1e-2, seed=0))
        assert res.curve[0][2] < 1.0  # starts imperfect
        assert res.train_accuracy == 1.0
        assert res.test_accuracy >= 0.5

    def test_returned_weights_are_frozen(self):
        ds = _separable_node_dataset()
        params, _ = train(ds, TrainConfig(epochs=2, seed=0))
        with pytest.raises(ValueError):
            params.w1[0, 0] = 0.0

    def test_deterministic_for_fixed_seed(self):
        ds = _separable_node_dataset()
        a, ra = train(ds, TrainConfig(epochs=20, seed=5))
        b, rb = train(ds, TrainConfig(epochs=20, seed=5))
        for name, arr in a.arrays().items():
            np.testing.assert_array_equal(arr, b.arrays()[name])
        assert ra.curve == rb.curve

    def test_seed_changes_split_and_init(self):
        ds = _separable_node_dataset()
        _, ra = train(ds, TrainConfig(epochs=1, seed=0))
        _, rb = train(ds, TrainConfig(epochs=1, seed=1))
        assert not np.array_equal(ra.train_indices, rb.train_indices)

    def test_split_is_a_partition(self):
        ds = _separable_node_dataset()
        _, res = train(ds, TrainConfig(epochs=1, seed=3))
        merged = np.concatenate([res.train_indices, res.test_indices])
        np.testing.assert_array_equal(np.sort(merged), np.arange(12))

    def test_curve_has_one_row_per_epoch(self):
        ds = _separable_node_dataset()
        _, res = train(ds, TrainConfig(epochs=7, seed=0))
        assert [row[0] for row in res.curve] == list(range(7))
        assert all(len(row) == 4 for row in res.curve)

    def test_zero_epochs_evaluates_the_init(self):
        ds = _separable_node_dataset()
        params, res = train(ds, TrainConfig(epochs=0, seed=0))
        assert res.curve == []
        assert 0.0 <= res.test_accuracy <= 1.0

    def test_dropout_training_still_learns(self):
        ds = _separable_node_dataset()
        _, res = train(
            ds, TrainConfig(epochs=300, learning_rate=1e-2, dropout=0.3, seed=0)
        )
        assert res.train_accuracy >= 0.8

    def test_divergence_reported_with_epoch(self):
        # a step this large overflows the layer products into inf - inf
        ds = _separable_node_dataset()
        with pytest.warns(RuntimeWarning):
            with pytest.raises(TrainingDiverged, match="epoch"):
                train(ds, TrainConfig(epochs=5, learning_rate=1e100, seed=0))

    def test_unknown_dataset_type_rejected(self):
        with pytest.raises(TypeError, match="cannot train"):
            train(object(), TrainConfig(epochs=1))


class TestGraphTraining:
    def test_accuracy_improves_on_separable_data(self):
        ds = _separable_graph_dataset()
        params, res = train(ds, TrainConfig(epochs=200, learning_rate=1e-2, seed=0))
        assert res.train_accuracy == 1.0
        assert res.test_accuracy >= 0.5

    def test_deterministic_for_fixed_seed(self):
        ds = _separable_graph_dataset()
        a, ra = train(ds, TrainConfig(epochs=15, seed=2))
        b, rb = train(ds, TrainConfig(epochs=15, seed=2))
        for name, arr in a.arrays().items():
            np.testing.assert_array_equal(arr, b.arrays()[name])
        assert ra.curve == rb.curve

    def test_weight_decay_shrinks_weights(self):
        ds = _separable_graph_dataset()
        plain, _ = train(ds, TrainConfig(epochs=50, seed=0))
        decayed, _ = train(ds, TrainConfig(epochs=50, seed=0, weight_decay=1e-1))
        assert np.linalg.norm(decayed.w1) < np.linalg.norm(plain.w1)


class TestCurveCsv:
    def test_round_trip(self, tmp_path):
        curve = [(0, 0.9, 0.5, 0.4), (1, 0.7, 0.75, 0.6)]
        path = tmp_path / "curve.csv"
        write_curve_csv(path, curve)
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["epoch", "loss", "train_acc", "test_acc"]
        assert [float(x) for x in rows[1]] == [0.0, 0.9, 0.5, 0.4]
        assert len(rows) == 3
