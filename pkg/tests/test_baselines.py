"""
Unit Tests for the LightGCN Baselines
"""

import unittest
from pathlib import Path
import sys

import numpy as np

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from src.config import TrainConfig
from src.core.dataset import restrict_criteria
from src.core.errors import ConfigError, EmptyDatasetError
from src.core.graph import build_graph, normalize
from src.core.model import xavier_uniform
from src.services.baselines import (
    LightGcnMcRecommender, LightGcnRecommender, _criterion_graph, lightgcn_forward,
    lightgcn_mc_forward,
)
from src.services.bpr import BprSampler
from src.services.recommender import CpaLgcRecommender
from src.services.training import train
from tests.fixtures import numeric_grad, random_interactions, tiny_splits

TINY = dict(dim=3, layers=2, batch_size=16, lr=0.01, max_epochs=2, seed=4)


class TestLightGcnForward(unittest.TestCase):
    """Test suite for the LightGCN propagation"""

    def setUp(self):
        self.train = random_interactions(6, 5, 3, 0.4, seed=0)
        self.adj = normalize(_criterion_graph(self.train, 0))

    def test_zero_embeddings(self):
        """Test that zero tables stay zero"""
        out = lightgcn_forward(self.adj, np.zeros((self.adj.node_count, 4)), 3)
        self.assertFalse(out.any())

    def test_matches_cpa_lgc_reduction(self):
        """Test that CPA-LGC without criteria, preferences or PairNorm equals LightGCN"""
        config = TrainConfig(**TINY, variant="no_cp", pairnorm=False)
        reduced = CpaLgcRecommender(restrict_criteria(self.train, 1), config)
        baseline = LightGcnRecommender(self.train, TrainConfig(**TINY))
        self.assertTrue(np.array_equal(reduced.state.E0, baseline.state.E0))
        a = reduced.forward().final_embeddings()
        b = baseline.forward().final_embeddings()
        self.assertTrue(np.allclose(a, b, atol=1e-12))

    def test_reduced_variant_is_lightgcn(self):
        """Test that the reduced variant picked by config matches LightGCN while training"""
        splits = tiny_splits()
        reduced = train(splits, TrainConfig(**TINY, variant="reduced", alpha=2.5), progress=False)
        baseline = train(splits, TrainConfig(**TINY), kind="lightgcn", progress=False)
        self.assertEqual(reduced.model.label, "CPA-LGC-MC-c-f")
        self.assertFalse(reduced.model.pairnorm_enabled)
        self.assertEqual(reduced.model.params().keys(), {"E0"})
        self.assertTrue(np.allclose([r.loss for r in reduced.log], [r.loss for r in baseline.log],
                                    rtol=1e-9, atol=0.0))
        a = reduced.model.forward().final_embeddings()
        b = baseline.model.forward().final_embeddings()
        self.assertTrue(np.allclose(a, b, atol=1e-9))

    def test_concatenation_doubles_identical_segments(self):
        """Test that two identical segments give twice the single-segment score"""
        E0 = xavier_uniform(np.random.default_rng(0), self.adj.node_count, 4)
        U, I = lightgcn_mc_forward([self.adj, self.adj], [E0, E0], 2)
        single = lightgcn_forward(self.adj, E0, 2)
        n_users = self.train.n_users
        expected = 2 * single[:n_users] @ single[n_users:].T
        self.assertEqual(U.shape[1], 8)
        self.assertTrue(np.allclose(U @ I.T, expected))

    def test_segments_independent(self):
        """Test that one criterion's table never affects another segment"""
        adjs = [normalize(_criterion_graph(self.train, c)) for c in range(3)]
        rng = np.random.default_rng(1)
        tables = [xavier_uniform(rng, a.node_count, 2) for a in adjs]
        U, _ = lightgcn_mc_forward(adjs, tables, 2)
        tables[2] = tables[2] * 5.0
        U2, _ = lightgcn_mc_forward(adjs, tables, 2, threads=3)
        self.assertTrue(np.array_equal(U[:, :4], U2[:, :4]))
        self.assertFalse(np.array_equal(U[:, 4:], U2[:, 4:]))

    def test_empty_criterion_segment_is_zero(self):
        """Test that a criterion without positives contributes zeros"""
        train = restrict_criteria(random_interactions(4, 3, 3, 0.5, seed=2), 2)
        train = train.subset(train.criteria == 0)
        with self.assertLogs("src.services.baselines", level="WARNING"):
            empty = normalize(_criterion_graph(train, 1))
        full = normalize(_criterion_graph(train, 0))
        rng = np.random.default_rng(0)
        tables = [xavier_uniform(rng, full.node_count, 2) for _ in range(2)]
        U, I = lightgcn_mc_forward([full, empty], tables, 2)
        self.assertFalse(U[:, 2:].any())
        self.assertFalse(I[:, 2:].any())

    def test_mismatched_tables(self):
        """Test that graph and table counts must agree"""
        with self.assertRaises(ConfigError):
            lightgcn_mc_forward([self.adj], [], 1)


class TestLightGcnMcRecommender(unittest.TestCase):
    """Test suite for the LightGCN_MC model"""

    def setUp(self):
        self.train = random_interactions(4, 3, 3, 0.5, seed=3)

    def test_header_layout(self):
        """Test that the header reports the criteria count"""
        model = LightGcnMcRecommender(self.train, TrainConfig(**TINY))
        header = model.header()
        self.assertEqual(header["layout"]["C"], 2)
        self.assertEqual(header["label"], "LightGCN_MC")
        self.assertEqual(set(model.params()), {"E0_c0", "E0_c1", "E0_c2"})

    def test_ranking_width(self):
        """Test that ranking vectors have (C+1) * d columns"""
        model = LightGcnMcRecommender(self.train, TrainConfig(**TINY))
        U, I = model.ranking_embeddings(model.forward())
        self.assertEqual(U.shape, (4, 9))
        self.assertEqual(I.shape, (3, 9))

    def test_gradients(self):
        """Test every segment gradient against finite differences"""
        model = LightGcnMcRecommender(self.train, TrainConfig(**TINY, reg_lambda=0.05))
        batch = BprSampler(model.sampling_graph).sample(12, np.random.default_rng(0))
        _, grads = model.loss_and_grads(model.forward(), batch)
        for c in range(3):
            original = model.tables[c].copy()

            def loss(X):
                model.tables[c] = X
                return model.loss_and_grads(model.forward(), batch)[0]

            numeric = numeric_grad(loss, original.copy())
            model.tables[c] = original
            with self.subTest(criterion=c):
                scale = max(1.0, float(np.abs(numeric).max()))
                self.assertLess(float(np.abs(grads[f"E0_c{c}"] - numeric).max()), 1e-5 * scale)

    def test_requires_overall_positives(self):
        """Test that a training set without overall positives is rejected"""
        side_only = self.train.subset(self.train.criteria > 0)
        with self.assertRaises(EmptyDatasetError):
            LightGcnMcRecommender(side_only, TrainConfig(**TINY))

    def test_sampling_graph_is_overall(self):
        """Test that BPR positives come from the overall graph"""
        model = LightGcnMcRecommender(self.train, TrainConfig(**TINY))
        expected = build_graph(restrict_criteria(self.train, 1), alpha=1.0)
        self.assertEqual(model.sampling_graph.n_edges, expected.n_edges)


if __name__ == '__main__':
    unittest.main()
