from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nsexplain.datasets import GraphDataset
from nsexplain.graphs import SparseGraph, build_instance
from nsexplain.model import forward, init_params
from nsexplain.oracle import (
    MAX_ORACLE_EDGES,
    edge_ids_from_mask_int,
    enumerate_edge_subset_values,
    oracle_best_edge_subset,
    oracle_pns_lb,
    toy_scm_monotone,
    toy_scm_pns,
)
from nsexplain.training import TrainConfig, train


def _tables(max_states=8):
    """Outcome tables with an exactly-normalized rational prior."""

    def build(pairs_and_weights):
        pairs = [(a, b) for (a, b), _ in pairs_and_weights]
        weights = [w for _, w in pairs_and_weights]
        total = sum(weights)
        return pairs, [Fraction(w, total) for w in weights]

    entry = st.tuples(
        st.tuples(st.booleans(), st.booleans()), st.integers(1, 20)
    )
    return st.lists(entry, min_size=1, max_size=max_states).map(build)


class TestToyScm:
    @given(_tables())
    @settings(max_examples=300)
    def test_bound_never_exceeds_exact(self, table):
        outcomes, prior = table
        exact, bound = toy_scm_pns(outcomes, prior)
        assert 0 <= bound <= exact <= 1
        assert isinstance(exact, Fraction) and isinstance(bound, Fraction)

    @given(_tables())
    @settings(max_examples=300)
    def test_equality_exactly_under_monotonicity(self, table):
        outcomes, prior = table
        exact, bound = toy_scm_pns(outcomes, prior)
        if toy_scm_monotone(outcomes, prior):
            assert bound == exact  # Fraction equality, no tolerance

    @given(_tables())
    @settings(max_examples=200)
    def test_bound_is_clamped_inner_value(self, table):
        outcomes, prior = table
        _, bound = toy_scm_pns(outcomes, prior)
        p_suf = sum(p for (k, _), p in zip(outcomes, prior) if k)
        p_nec = sum(p for (_, c), p in zip(outcomes, prior) if not c)
        assert bound == max(Fraction(0), p_suf + p_nec - 1)

    def test_single_state_cases(self):
        # (kept produces, complement produces) spans all four corners
        assert toy_scm_pns([(True, False)], [1]) == (1, 1)
        assert toy_scm_pns([(True, True)], [1]) == (0, 0)
        assert toy_scm_pns([(False, False)], [1]) == (0, 0)

    def test_nonmonotone_strict_gap(self):
        # half the mass flips the wrong way: exact 1/2, inner bound 0
        outcomes = [(True, False), (False, True)]
        prior = [Fraction(1, 2), Fraction(1, 2)]
        assert not toy_scm_monotone(outcomes, prior)
        exact, bound = toy_scm_pns(outcomes, prior)
        assert exact == Fraction(1, 2)
        assert bound == 0

    def test_zero_prior_states_cannot_break_monotonicity(self):
        outcomes = [(True, False), (False, True)]
        assert toy_scm_monotone(outcomes, [1, 0])
        exact, bound = toy_scm_pns(outcomes, [1, 0])
        assert exact == bound == 1

    def test_prior_must_sum_to_one(self):
        with pytest.raises(ValueError, match="sum"):
            toy_scm_pns([(True, False)], [Fraction(1, 2)])

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError, match="length"):
            toy_scm_pns([(True, False)], [Fraction(1, 2), Fraction(1, 2)])

    def test_empty_table_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            toy_scm_pns([], [])

    def test_negative_prior_rejected(self):
        with pytest.raises(ValueError, match="nonnegative"):
            toy_scm_pns([(True, False), (True, True)], [2, -1])


@pytest.fixture(scope="module")
def small_instance():
    """4-node, 4-edge graph under a random frozen model."""
    rng = np.random.default_rng(6)
    model = init_params(4, 2, rng).freeze()
    g = SparseGraph(4, [(0, 1), (0, 2), (1, 2), (2, 3)])
    return build_instance(g, rng.normal(size=(4, 4)), "graph", model, label=1)


class TestEdgeEnumeration:
    def test_index_bit_semantics(self, small_instance):
        inst = small_instance
        values = enumerate_edge_subset_values(inst.model, inst)
        assert values.shape == (16,)
        full, _ = forward(
            inst.model, inst.graph, inst.graph.arc_weights(), inst.features, "graph"
        )
        assert values[15] == pytest.approx(
            float(full[inst.predicted_label]), abs=1e-15
        )
        empty, _ = forward(
            inst.model, inst.graph, inst.graph.arc_weights(np.zeros(4)),
            inst.features, "graph",
        )
        assert values[0] == pytest.approx(
            float(empty[inst.predicted_label]), abs=1e-15
        )
        # bit j of the index keeps edge j
        one_edge, _ = forward(
            inst.model, inst.graph,
            inst.graph.arc_weights(np.array([0.0, 1.0, 0.0, 0.0])),
            inst.features, "graph",
        )
        assert values[2] == pytest.approx(
            float(one_edge[inst.predicted_label]), abs=1e-15
        )

    def test_size_cap_enforced(self):
        rng = np.random.default_rng(0)
        model = init_params(4, 2, rng)
        edges = [(u, v) for u in range(6) for v in range(u + 1, 6)][: MAX_ORACLE_EDGES + 1]
        g = SparseGraph(6, sorted(edges))
        inst = build_instance(g, rng.normal(size=(6, 4)), "graph", model)
        with pytest.raises(ValueError, match="capped"):
            enumerate_edge_subset_values(model, inst)


class TestOraclePnsLb:
    def test_matches_independent_edge_only_recount(self, small_instance):
        # recompute pn/ps with plain python loops over explicit forwards
        inst = small_instance
        subset = np.array([0, 2])
        got = oracle_pns_lb(inst.model, inst, subset)

        def value_of(bits):
            w = np.array(bits, dtype=np.float64)
            probs, _ = forward(
                inst.model, inst.graph, inst.graph.arc_weights(w),
                inst.features, "graph",
            )
            return float(probs[inst.predicted_label])

        all_vals = {}
        for k in range(16):
            all_vals[k] = value_of([(k >> j) & 1 for j in range(4)])
        ps = all_vals[0b0101]
        others = [v for k, v in all_vals.items() if k != 0b0101]
        pn = 1.0 - sum(others) / 15.0
        assert got == pytest.approx(max(0.0, pn + ps - 1.0), abs=1e-12)

    def test_joint_matches_independent_mixture_recount(self):
        rng = np.random.default_rng(8)
        model = init_params(3, 2, rng).freeze()
        g = SparseGraph(3, [(0, 1), (0, 2), (1, 2)])
        inst = build_instance(g, rng.normal(size=(3, 3)), "graph", model)
        got = oracle_pns_lb(
            model, inst, np.array([0, 1]), node_subset=np.array([0, 1]),
            priors=(0.5, 0.25, 0.25),
        )

        def value_of(eb, nb):
            w = np.array([(eb >> j) & 1 for j in range(3)], dtype=np.float64)
            nm = np.array([(nb >> j) & 1 for j in range(3)], dtype=np.float64)
            probs, _ = forward(
                model, g, g.arc_weights(w), inst.features * nm[:, None], "graph"
            )
            return float(probs[inst.predicted_label])

        kb, kc = 0b011, 0b011
        ps = value_of(kb, kc)
        both = [
            value_of(i, j)
            for i in range(8)
            for j in range(8)
            if i != kb and j != kc
        ]
        edges_differ = [value_of(i, kc) for i in range(8) if i != kb]
        nodes_differ = [value_of(kb, j) for j in range(8) if j != kc]
        pn = (
            1.0
            - 0.5 * np.mean(both)
            - 0.25 * np.mean(edges_differ)
            - 0.25 * np.mean(nodes_differ)
        )
        assert got == pytest.approx(max(0.0, pn + ps - 1.0), abs=1e-12)

    def test_subset_validation(self, small_instance):
        inst = small_instance
        with pytest.raises(ValueError, match="duplicate"):
            oracle_pns_lb(inst.model, inst, np.array([1, 1]))
        with pytest.raises(ValueError, match="out of range"):
            oracle_pns_lb(inst.model, inst, np.array([4]))
        with pytest.raises(ValueError, match="length"):
            oracle_pns_lb(inst.model, inst, np.array([True, False]))

    def test_bad_priors_rejected(self, small_instance):
        inst = small_instance
        with pytest.raises(ValueError, match="priors"):
            oracle_pns_lb(
                inst.model, inst, np.array([0]), node_subset=np.array([0]),
                priors=(0.5, 0.5, 0.5),
            )

    def test_boolean_mask_form_agrees_with_ids(self, small_instance):
        inst = small_instance
        ids = oracle_pns_lb(inst.model, inst, np.array([1, 3]))
        mask = oracle_pns_lb(
            inst.model, inst, np.array([False, True, False, True])
        )
        assert ids == mask


class TestBestSubset:
    def test_agrees_with_direct_argmax(self, small_instance):
        inst = small_instance
        best, val = oracle_best_edge_subset(inst.model, inst)
        scores = [
            oracle_pns_lb(inst.model, inst, edge_ids_from_mask_int(k, 4))
            for k in range(1, 16)
        ]
        # mask 0 scores max(0, pn + ps - 1) too; include it
        scores = [oracle_pns_lb(inst.model, inst, np.array([], dtype=np.int64))] + scores
        assert val == pytest.approx(max(scores), abs=1e-12)
        assert scores[best] == pytest.approx(val, abs=1e-12)

    def test_mask_decoding(self):
        np.testing.assert_array_equal(edge_ids_from_mask_int(12, 6), [2, 3])
        np.testing.assert_array_equal(edge_ids_from_mask_int(0, 3), [])
        np.testing.assert_array_equal(edge_ids_from_mask_int(7, 3), [0, 1, 2])


class TestFrozenRegression:
    """A fully pinned train-then-enumerate rig guarding numeric drift.

    Six 4-node graphs labeled by triangle presence; the first instance
    keeps its triangle as the best discrete explanation. The expected
    constant was computed by this oracle at freeze time and must stay
    bit-identical while model, trainer, and oracle are untouched.
    """

    def test_triangle_instance_best_subset(self):
        def g(edges):
            return SparseGraph.undirected(4, edges)

        graphs = [
            g([(0, 1), (0, 2), (1, 2), (2, 3)]),
            g([(0, 1), (1, 2), (2, 3)]),
            g([(0, 1), (0, 3), (1, 3), (1, 2)]),
            g([(0, 1), (1, 2), (2, 3), (0, 3)]),
            g([(0, 2), (2, 3), (0, 3)]),
            g([(0, 2), (1, 2), (1, 3)]),
        ]
        rng = np.random.default_rng(3)
        feats = [rng.normal(0.0, 1.0, size=(4, 4)) for _ in graphs]
        labels = np.array([1, 0, 1, 0, 1, 0])
        ds = GraphDataset("triangle-toy", graphs, feats, labels, 2)
        params, _ = train(
            ds,
            TrainConfig(learning_rate=5e-3, epochs=600, train_fraction=0.8, seed=0),
        )
        inst = ds.instance(params, 0)
        assert inst.predicted_label == 1
        best_mask, best_val = oracle_best_edge_subset(params, inst)
        assert best_mask == 12
        np.testing.assert_array_equal(
            edge_ids_from_mask_int(best_mask, inst.num_edges), [2, 3]
        )
        assert best_val == 0.31206655602553457
