"""
Unit Tests for Ranking Evaluation

Tests Precision/Recall/NDCG@K against hand-worked rankings and a brute
force oracle, exclusion of seen items, top-K lists and smoothness.
"""

import unittest
import json
import math
import tempfile
import shutil
from pathlib import Path
import sys

import numpy as np
import pandas as pd

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from src.config import TrainConfig
from src.core.dataset import InteractionSet
from src.core.errors import ConfigError, EvaluationError
from src.core.graph import NodeLayout, build_graph, normalize
from src.core.model import ForwardTrace, forward, init_state
from src.core.seeding import RngStreams
from src.services.evaluation import (
    evaluate_recommender, mean_pairwise_sq_distance, metrics_from_scores, rank_and_score,
    smoothness_report, top_k,
)
from src.services.recommender import CpaLgcRecommender
from tests.fixtures import random_interactions, tiny_splits


def overall_set(pairs, n_users, n_items):
    users = [u for u, _ in pairs]
    items = [i for _, i in pairs]
    return InteractionSet(
        user_ids=tuple(f"u{u}" for u in range(n_users)),
        item_ids=tuple(f"i{i}" for i in range(n_items)),
        n_criteria_plus1=1,
        users=np.array(users, dtype=np.int64),
        items=np.array(items, dtype=np.int64),
        criteria=np.zeros(len(pairs), dtype=np.int64),
    )


def brute_force(scores, train_pairs, test_pairs, n_users, n_items, k):
    precision, recall, ndcg = [], [], []
    for u in range(n_users):
        relevant = {i for v, i in test_pairs if v == u}
        if not relevant:
            continue
        seen = {i for v, i in train_pairs if v == u}
        ranked = sorted((i for i in range(n_items) if i not in seen),
                        key=lambda i: (-scores[u, i], i))[:k]
        hits = [1.0 if i in relevant else 0.0 for i in ranked]
        precision.append(sum(hits) / k)
        recall.append(sum(hits) / len(relevant))
        dcg = sum(h / math.log2(pos + 2) for pos, h in enumerate(hits))
        idcg = sum(1.0 / math.log2(pos + 2) for pos in range(min(k, len(relevant))))
        ndcg.append(dcg / idcg)
    return np.mean(precision), np.mean(recall), np.mean(ndcg)


class TestRankingMetrics(unittest.TestCase):
    """Test suite for Precision/Recall/NDCG@K"""

    def setUp(self):
        # user 1 only exists to own a training positive
        self.train = overall_set([(1, 3)], 2, 4)
        self.scores = np.array([[0.9, 0.1, 0.8, 0.2], [0.0, 0.0, 0.0, 0.0]])

    def test_worked_example_k2(self):
        """Test scores (0.9, 0.1, 0.8, 0.2) with test {i0, i2} at K=2"""
        metrics = metrics_from_scores(self.scores, self.train, overall_set([(0, 0), (0, 2)], 2, 4),
                                      k_values=(1, 2))
        self.assertEqual(metrics.n_users, 1)
        self.assertAlmostEqual(metrics.precision[2], 1.0)
        self.assertAlmostEqual(metrics.recall[2], 1.0)
        self.assertAlmostEqual(metrics.ndcg[2], 1.0)
        self.assertAlmostEqual(metrics.precision[1], 1.0)
        self.assertAlmostEqual(metrics.recall[1], 0.5)
        self.assertAlmostEqual(metrics.ndcg[1], 1.0)

    def test_single_hit_k5(self):
        """Test a single test item ranked first at K=5"""
        scores = np.array([[0.1, 0.2, 0.3, 0.9, 0.0, 0.5], [0.0] * 6])
        metrics = metrics_from_scores(scores, overall_set([(1, 0)], 2, 6),
                                      overall_set([(0, 3)], 2, 6), k_values=(5,))
        self.assertAlmostEqual(metrics.precision[5], 0.2)
        self.assertAlmostEqual(metrics.recall[5], 1.0)
        self.assertAlmostEqual(metrics.ndcg[5], 1.0)

    def test_hit_at_third(self):
        """Test NDCG 1/log2(4) for a hit in third place"""
        scores = np.array([[0.9, 0.8, 0.7, 0.1], [0.0] * 4])
        metrics = metrics_from_scores(scores, self.train, overall_set([(0, 2)], 2, 4), k_values=(3,))
        self.assertAlmostEqual(metrics.ndcg[3], 0.5)

    def test_train_items_excluded(self):
        """Test that a training positive never occupies a ranking slot"""
        scores = np.array([[0.9, 0.1, 0.8, 0.2], [0.0] * 4])
        train = overall_set([(0, 0), (1, 3)], 2, 4)
        metrics = metrics_from_scores(scores, train, overall_set([(0, 2)], 2, 4), k_values=(1,))
        self.assertAlmostEqual(metrics.precision[1], 1.0)

    def test_extra_exclude(self):
        """Test that validation positives can be excluded too"""
        valid = overall_set([(0, 0)], 2, 4)
        metrics = metrics_from_scores(self.scores, self.train, overall_set([(0, 2)], 2, 4),
                                      k_values=(1,), extra_exclude=[valid])
        self.assertAlmostEqual(metrics.ndcg[1], 1.0)

    def test_ties_break_to_lower_index(self):
        """Test that equal scores rank the lower item index first"""
        scores = np.zeros((2, 4))
        metrics = metrics_from_scores(scores, self.train, overall_set([(0, 0)], 2, 4), k_values=(1,))
        self.assertAlmostEqual(metrics.precision[1], 1.0)

    def test_brute_force_oracle(self):
        """Test against an independent ranking on 1000 random score vectors (200 x 5 users)"""
        rng = np.random.default_rng(0)
        for trial in range(200):
            n_users, n_items = 5, int(rng.integers(2, 9))
            pairs = [(u, i) for u in range(n_users) for i in range(n_items)]
            rng.shuffle(pairs)
            cut = len(pairs) // 3
            train_pairs = pairs[:cut]
            test_pairs = pairs[cut:cut + len(pairs) // 4 + 1]
            scores = rng.normal(size=(n_users, n_items)).round(1)
            k = int(rng.integers(1, n_items + 2))
            metrics = metrics_from_scores(scores, overall_set(train_pairs, n_users, n_items),
                                          overall_set(test_pairs, n_users, n_items), k_values=(k,))
            expected = brute_force(scores, train_pairs, test_pairs, n_users, n_items, k)
            with self.subTest(trial=trial):
                self.assertAlmostEqual(metrics.precision[k], expected[0])
                self.assertAlmostEqual(metrics.recall[k], expected[1])
                self.assertAlmostEqual(metrics.ndcg[k], expected[2])

    def test_chunks_and_threads_agree(self):
        """Test that chunked threaded ranking matches a single pass"""
        rng = np.random.default_rng(1)
        train = overall_set([(u, 0) for u in range(20)], 20, 6)
        test = overall_set([(u, 1 + u % 5) for u in range(20)], 20, 6)
        scores = rng.normal(size=(20, 6))
        single = metrics_from_scores(scores, train, test, per_user=True)
        chunked = metrics_from_scores(scores, train, test, per_user=True, threads=3, chunk_size=4)
        self.assertEqual(single.to_dict(), chunked.to_dict())

    def test_embeddings_match_scores(self):
        """Test that rank_and_score equals ranking the explicit score matrix"""
        rng = np.random.default_rng(2)
        U, I = rng.normal(size=(2, 3)), rng.normal(size=(4, 3))
        test = overall_set([(0, 0), (0, 2)], 2, 4)
        self.assertEqual(rank_and_score(U, I, self.train, test).to_dict(),
                         metrics_from_scores(U @ I.T, self.train, test).to_dict())
        with self.assertRaises(ConfigError):
            rank_and_score(U, I[:, :2], self.train, test)

    def test_no_test_users(self):
        """Test that an empty test set raises EvaluationError"""
        with self.assertRaises(EvaluationError):
            metrics_from_scores(self.scores, self.train, overall_set([], 2, 4))

    def test_outputs(self):
        """Test the JSON and CSV result files"""
        test_dir = Path(tempfile.mkdtemp())
        try:
            metrics = metrics_from_scores(self.scores, self.train,
                                          overall_set([(0, 0), (0, 2)], 2, 4), k_values=(1, 2),
                                          label="CPA-LGC")
            metrics.write_json(test_dir / "metrics.json")
            metrics.write_csv(test_dir / "metrics.csv")
            with open(test_dir / "metrics.json") as f:
                payload = json.load(f)
            self.assertEqual(payload["recall"], {"1": 0.5, "2": 1.0})
            frame = pd.read_csv(test_dir / "metrics.csv")
            self.assertEqual(len(frame), 6)
            self.assertEqual(set(frame["label"]), {"CPA-LGC"})
        finally:
            shutil.rmtree(test_dir, ignore_errors=True)


class TestModelEvaluation(unittest.TestCase):
    """Test suite for evaluating and querying a model"""

    def setUp(self):
        self.splits = tiny_splits()
        config = TrainConfig(dim=4, layers=2, seed=0)
        self.model = CpaLgcRecommender(self.splits.train, config)

    def test_evaluate_is_deterministic(self):
        """Test that evaluating twice gives identical metrics"""
        a = evaluate_recommender(self.model, self.splits.train, self.splits.test)
        b = evaluate_recommender(self.model, self.splits.train, self.splits.test)
        self.assertEqual(a.to_dict(), b.to_dict())
        self.assertEqual(a.label, "CPA-LGC")

    def test_top_k_skips_seen(self):
        """Test that recommendations exclude training items and are sorted"""
        seen = set(self.splits.train.user_items(0)[0].tolist())
        recs = top_k(self.model, self.splits.train, 0, k=3)
        self.assertEqual(len(recs), 3)
        self.assertFalse(seen & {item for item, _ in recs})
        scores = [score for _, score in recs]
        self.assertEqual(scores, sorted(scores, reverse=True))

    def test_top_k_larger_than_catalog(self):
        """Test that K beyond the unseen catalog is truncated"""
        n_unseen = self.splits.train.n_items - len(self.splits.train.user_items(0)[1])
        self.assertEqual(len(top_k(self.model, self.splits.train, 1, k=1000)), n_unseen)


def fake_trace(tables):
    layout = NodeLayout(1, tables[0].shape[0] - 1, 1)
    return ForwardTrace(layout=layout, layers=len(tables) - 1, scale=1.0, pairnorm_enabled=False,
                        pairnorm_layer0=False, training=False, e_layers=tables, e_dot=tables)


class TestSmoothness(unittest.TestCase):
    """Test suite for pairwise distance diagnostics"""

    def test_three_four_five(self):
        """Test that nodes at (0, 0) and (3, 4) are 5 apart"""
        report = smoothness_report(fake_trace([np.array([[0.0, 0.0], [3.0, 4.0]])]))
        self.assertAlmostEqual(report.mean_distance[0], 5.0)
        self.assertAlmostEqual(report.mean_sq_distance[0], 12.5)

    def test_identical_rows(self):
        """Test that identical embeddings have zero distance"""
        report = smoothness_report(fake_trace([np.ones((4, 3)), np.ones((4, 3))]))
        self.assertEqual(report.mean_distance, [0.0, 0.0])
        self.assertEqual(report.layers, [0, 1])

    def test_closed_form_matches_pairs(self):
        """Test the closed-form mean squared distance over ordered pairs"""
        X = np.random.default_rng(0).normal(size=(7, 3))
        brute = np.mean([np.sum((a - b) ** 2) for a in X for b in X])
        self.assertAlmostEqual(mean_pairwise_sq_distance(X), brute)

    def test_sampling_needs_rng(self):
        """Test that sampling a large graph requires a stream"""
        trace = fake_trace([np.random.default_rng(0).normal(size=(10, 2))])
        with self.assertRaises(ConfigError):
            smoothness_report(trace, max_nodes=4)
        report = smoothness_report(trace, max_nodes=4, rng=np.random.default_rng(1))
        self.assertEqual(report.n_nodes, 4)

    def test_histogram_frame(self):
        """Test one histogram row per bin and layer"""
        trace = fake_trace([np.random.default_rng(0).normal(size=(6, 2))] * 2)
        frame = smoothness_report(trace, bins=5).histogram_frame()
        self.assertEqual(len(frame), 10)
        self.assertEqual(int(frame[frame["layer"] == 0]["count"].sum()), 15)

    def test_plain_propagation_smooths(self):
        """Test that without PairNorm the mean distance never grows over layers 1..5"""
        graph = build_graph(random_interactions(40, 30, 3, 0.15, seed=3))
        state = init_state(graph.layout, 64, RngStreams(3))
        trace = forward(normalize(graph), state, 5, pairnorm_enabled=False)
        distances = smoothness_report(trace).mean_distance
        self.assertEqual(len(distances), 6)
        for layer in range(1, 5):
            self.assertLessEqual(distances[layer + 1], distances[layer] * (1 + 1e-9),
                                 msg=f"layer {layer + 1}")


if __name__ == '__main__':
    unittest.main()
