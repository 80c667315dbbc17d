"""
Unit Tests for the Graph Module

Tests MC expansion graph construction, symmetric normalization and
propagation against dense matrix oracles.
"""

import unittest
import json
import tempfile
import shutil
from pathlib import Path
import sys

import numpy as np

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from src.core.dataset import InteractionSet
from src.core.errors import DimensionMismatchError, EmptyDatasetError, GraphError
from src.core.graph import NodeLayout, build_graph, export_graph, normalize, propagate
from tests.fixtures import dense_normalized, random_interactions


def make_set(triples, n_users, n_items, n_criteria_plus1, weights=None):
    users, items, criteria = zip(*triples)
    return InteractionSet(
        user_ids=tuple(f"u{u}" for u in range(n_users)),
        item_ids=tuple(f"i{i}" for i in range(n_items)),
        n_criteria_plus1=n_criteria_plus1,
        users=np.array(users),
        items=np.array(items),
        criteria=np.array(criteria),
        weights=weights,
    )


class TestNodeLayout(unittest.TestCase):
    """Test suite for the canonical node layout"""

    def test_item_node_index(self):
        """Test node(i, c) = n_users + c * n_items + i"""
        layout = NodeLayout(n_users=3, n_items=4, n_criteria_plus1=3)
        self.assertEqual(layout.node_count, 15)
        self.assertEqual(layout.item_node(2, 1), 9)
        self.assertEqual(layout.item_block(2), slice(11, 15))
        self.assertEqual(layout.criterion_of(np.array([3, 7, 14])).tolist(), [0, 1, 2])

    def test_dict_round_trip(self):
        """Test that the layout header reports C, not C+1"""
        layout = NodeLayout(2, 5, 4)
        self.assertEqual(layout.to_dict()["C"], 3)
        self.assertEqual(NodeLayout.from_dict(layout.to_dict()), layout)


class TestBuildGraph(unittest.TestCase):
    """Test suite for build_graph"""

    def test_canonical_example(self):
        """Test edges (0, 2, 1.5) and (1, 3, 1.0) for two positives"""
        graph = build_graph(make_set([(0, 0, 0), (1, 0, 1)], 2, 1, 2), alpha=1.5)
        self.assertEqual(graph.node_count, 4)
        edges = sorted(zip(graph.src.tolist(), graph.dst.tolist(), graph.weight.tolist()))
        self.assertEqual(edges, [(0, 2, 1.5), (1, 3, 1.0)])

    def test_unit_alpha(self):
        """Test that alpha=1 gives an unweighted graph"""
        graph = build_graph(random_interactions(5, 4, 3, 0.4), alpha=1.0)
        self.assertTrue(np.all(graph.weight == 1.0))

    def test_empty_criterion_isolated(self):
        """Test that a criterion without positives leaves its item nodes isolated"""
        graph = build_graph(make_set([(0, 0, 0), (1, 1, 0)], 2, 2, 3))
        block = graph.layout.item_block(2)
        self.assertTrue(np.all(graph.weighted_degree[block] == 0))

    def test_one_edge_per_positive(self):
        """Test that every positive becomes exactly one user to criterion-item edge"""
        iset = random_interactions(8, 6, 4, 0.3, seed=3)
        graph = build_graph(iset)
        self.assertEqual(graph.n_edges, len(iset))
        self.assertTrue(np.all(graph.src < graph.n_users))
        self.assertTrue(np.array_equal(graph.layout.criterion_of(graph.dst), iset.criteria))

    def test_degrees(self):
        """Test weighted degrees against the dense adjacency"""
        graph = build_graph(random_interactions(6, 5, 3, 0.4, seed=4))
        dense = graph.adjacency().toarray()
        self.assertTrue(np.allclose(dense.sum(axis=1), graph.weighted_degree))
        self.assertTrue(np.allclose(dense, dense.T))

    def test_rating_weights(self):
        """Test optional rating-valued weights times alpha"""
        iset = make_set([(0, 0, 0), (0, 0, 1)], 1, 1, 2, weights=np.array([4.0, 2.0]))
        graph = build_graph(iset, alpha=1.5, use_rating_weights=True)
        self.assertEqual(sorted(graph.weight.tolist()), [2.0, 6.0])

    def test_errors(self):
        """Test empty training sets and invalid alpha"""
        empty = make_set([(0, 0, 0)], 1, 1, 1).subset(np.array([False]))
        with self.assertRaises(EmptyDatasetError):
            build_graph(empty)
        with self.assertRaises(GraphError):
            build_graph(make_set([(0, 0, 0)], 1, 1, 1), alpha=0.0)

    def test_export(self):
        """Test that export writes an edge list and a header"""
        test_dir = Path(tempfile.mkdtemp())
        try:
            graph = build_graph(make_set([(0, 0, 0), (1, 0, 1)], 2, 1, 2))
            header_path, edges_path = export_graph(graph, test_dir)
            with open(header_path) as f:
                self.assertEqual(json.load(f), {"n_users": 2, "n_items": 1, "C": 1})
            self.assertEqual(len(edges_path.read_text().strip().splitlines()), 2)
        finally:
            shutil.rmtree(test_dir, ignore_errors=True)


class TestNormalize(unittest.TestCase):
    """Test suite for symmetric normalization"""

    def test_single_edge(self):
        """Test that a lone edge of weight 4 normalizes to 1"""
        graph = build_graph(make_set([(0, 0, 0)], 1, 1, 1), alpha=4.0)
        self.assertAlmostEqual(normalize(graph).coef(0, 1), 1.0)

    def test_lone_edge_is_exact(self):
        """Test that a lone edge normalizes to exactly 1 for any alpha"""
        for alpha in (1.5, 0.3, 7.0):
            with self.subTest(alpha=alpha):
                graph = build_graph(make_set([(0, 0, 0)], 1, 1, 1), alpha=alpha)
                adj = normalize(graph)
                self.assertEqual(adj.coef(0, 1), 1.0)
                self.assertEqual(adj.coef(1, 0), 1.0)

    def test_two_edges_from_user(self):
        """Test coef 1/sqrt(2) for a user with two unit edges"""
        graph = build_graph(make_set([(0, 0, 0), (0, 1, 1)], 1, 2, 2), alpha=1.0)
        adj = normalize(graph)
        self.assertAlmostEqual(adj.coef(0, graph.layout.item_node(0, 0)), 1 / np.sqrt(2))
        self.assertAlmostEqual(adj.coef(0, graph.layout.item_node(1, 1)), 1 / np.sqrt(2))

    def test_star(self):
        """Test coef 1/sqrt(3) for an item node with three degree-1 users"""
        graph = build_graph(make_set([(0, 0, 0), (1, 0, 0), (2, 0, 0)], 3, 1, 1), alpha=1.0)
        adj = normalize(graph)
        for u in range(3):
            self.assertAlmostEqual(adj.coef(u, 3), 1 / np.sqrt(3))

    def test_dense_oracle(self):
        """Test normalize against an independent dense computation"""
        for seed in range(20):
            graph = build_graph(random_interactions(5, 4, 3, 0.3, seed=seed), alpha=1.5)
            self.assertTrue(np.allclose(normalize(graph).to_dense(), dense_normalized(graph),
                                        atol=1e-12))


class TestPropagate(unittest.TestCase):
    """Test suite for one propagation step"""

    def test_single_neighbor(self):
        """Test that a coef-1 edge copies the item row onto the user"""
        graph = build_graph(make_set([(0, 0, 0)], 1, 1, 1))
        X = np.array([[0.0, 0.0], [1.0, 2.0]])
        self.assertEqual(propagate(normalize(graph), X)[0].tolist(), [1.0, 2.0])

    def test_zeros(self):
        """Test linearity on a zero table"""
        adj = normalize(build_graph(random_interactions(4, 3, 2, 0.5)))
        self.assertFalse(propagate(adj, np.zeros((adj.node_count, 3))).any())

    def test_dense_oracle(self):
        """Test propagate equals dense A X on random graphs up to 50 nodes"""
        rng = np.random.default_rng(0)
        for trial in range(100):
            n_users = int(rng.integers(1, 10))
            n_items = int(rng.integers(1, 8))
            iset = random_interactions(n_users, n_items, int(rng.integers(1, 4)), 0.4, seed=trial)
            graph = build_graph(iset, alpha=float(rng.uniform(0.5, 2.0)))
            adj = normalize(graph)
            X = rng.normal(size=(graph.node_count, 3))
            err = np.abs(propagate(adj, X) - dense_normalized(graph) @ X).max()
            self.assertLessEqual(err, 1e-10)

    def test_threads_match(self):
        """Test that row-partitioned propagation is bitwise identical"""
        adj = normalize(build_graph(random_interactions(20, 15, 3, 0.3, seed=7)))
        X = np.random.default_rng(1).normal(size=(adj.node_count, 4))
        self.assertTrue(np.array_equal(propagate(adj, X, threads=1), propagate(adj, X, threads=4)))

    def test_dimension_mismatch(self):
        """Test that a wrong row count is rejected"""
        adj = normalize(build_graph(random_interactions(3, 3, 1, 0.5)))
        with self.assertRaises(DimensionMismatchError):
            propagate(adj, np.zeros((adj.node_count + 1, 2)))


if __name__ == '__main__':
    unittest.main()
