"""
Ranking Evaluation and Smoothness Diagnostics

Full ranking over every item a user has not interacted with in training
(and, by default, validation). Ties break toward the lower item index.
"""

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.spatial.distance import pdist

from src.core.dataset import InteractionSet
from src.core.errors import ConfigError, EvaluationError
from src.core.model import ForwardTrace

logger = logging.getLogger(__name__)

METRIC_NAMES = ("precision", "recall", "ndcg")


@dataclass
class RankingMetrics:
    """Precision@K, Recall@K and NDCG@K averaged over evaluated users"""

    k_values: Tuple[int, ...]
    precision: Dict[int, float]
    recall: Dict[int, float]
    ndcg: Dict[int, float]
    n_users: int
    label: str = ""
    per_user: Optional[Dict[int, Dict[str, Dict[int, float]]]] = None

    def metric(self, name: str, k: int) -> float:
        return getattr(self, name)[k]

    def to_dict(self) -> Dict:
        out = {
            "label": self.label,
            "n_users": self.n_users,
            "k_values": list(self.k_values),
        }
        for name in METRIC_NAMES:
            out[name] = {str(k): getattr(self, name)[k] for k in self.k_values}
        if self.per_user is not None:
            out["per_user"] = {
                str(u): {name: {str(k): v for k, v in vals.items()} for name, vals in row.items()}
                for u, row in self.per_user.items()
            }
        return out

    def to_frame(self) -> pd.DataFrame:
        rows = [
            {"label": self.label, "metric": name, "k": k, "value": getattr(self, name)[k]}
            for name in METRIC_NAMES for k in self.k_values
        ]
        return pd.DataFrame(rows, columns=["label", "metric", "k", "value"])

    def write_json(self, path: Union[str, Path]) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)

    def write_csv(self, path: Union[str, Path]) -> None:
        self.to_frame().to_csv(path, index=False)


def _dcg_discounts(n: int) -> np.ndarray:
    return 1.0 / np.log2(np.arange(2, n + 2))


def _relevance_matrix(users: np.ndarray, items: Sequence[np.ndarray], n_items: int) -> np.ndarray:
    rel = np.zeros((len(users), n_items), dtype=bool)
    for row, u in enumerate(users):
        rel[row, items[u]] = True
    return rel


def metrics_from_scores(scores: np.ndarray, train: InteractionSet, test: InteractionSet,
                        k_values: Sequence[int] = (5, 10),
                        extra_exclude: Sequence[InteractionSet] = (),
                        per_user: bool = False, threads: int = 1,
                        chunk_size: int = 1024, label: str = "") -> RankingMetrics:
    """
    Rank a dense n_users x n_items score matrix and score it against test

    Args:
        scores: Criterion-0 scores, row per user
        train: Its overall positives are excluded from ranking
        test: Overall positives to retrieve; users without any are skipped
        k_values: Cutoffs
        extra_exclude: More sets whose overall positives are excluded
        per_user: Keep each user's metrics too
        threads: Chunks of users ranked concurrently
        chunk_size: Users per chunk
        label: Copied to the result

    Returns:
        RankingMetrics
    """
    scores = np.asarray(scores, dtype=np.float64)
    return _evaluate(lambda users: scores[users], train, test, k_values, extra_exclude,
                     per_user, threads, chunk_size, label)


def rank_and_score(user_emb: np.ndarray, item_emb: np.ndarray, train: InteractionSet,
                   test: InteractionSet, k_values: Sequence[int] = (5, 10),
                   extra_exclude: Sequence[InteractionSet] = (), per_user: bool = False,
                   threads: int = 1, chunk_size: int = 1024, label: str = "") -> RankingMetrics:
    """Same as metrics_from_scores with scores = user_emb . item_emb^T, computed per chunk"""
    if user_emb.shape[1] != item_emb.shape[1]:
        raise ConfigError(f"embedding widths differ: {user_emb.shape[1]} vs {item_emb.shape[1]}")
    return _evaluate(lambda users: user_emb[users] @ item_emb.T, train, test, k_values,
                     extra_exclude, per_user, threads, chunk_size, label)


def _evaluate(score_rows, train: InteractionSet, test: InteractionSet, k_values, extra_exclude,
              per_user: bool, threads: int, chunk_size: int, label: str) -> RankingMetrics:
    k_values = tuple(sorted({int(k) for k in k_values}))
    if not k_values or k_values[0] < 1:
        raise ConfigError(f"k values must be positive, got {k_values}")
    n_items = train.n_items
    test_items = test.user_items(0)
    users = np.array([u for u in range(test.n_users) if len(test_items[u])], dtype=np.int64)
    if len(users) == 0:
        raise EvaluationError("no user has a test positive")

    excluded = train.user_item_matrix(0)
    for other in extra_exclude:
        excluded = excluded + other.user_item_matrix(0)
    excluded = excluded.tocsr()
    max_k = min(k_values[-1], n_items)
    discounts = _dcg_discounts(max_k)

    def run(chunk: np.ndarray) -> Dict[str, np.ndarray]:
        S = np.array(score_rows(chunk), dtype=np.float64, copy=True)
        mask = excluded[chunk].toarray() > 0
        S[mask] = -np.inf
        n_candidates = n_items - mask.sum(axis=1)
        order = np.argsort(-S, axis=1, kind="stable")[:, :max_k]
        rel = _relevance_matrix(chunk, test_items, n_items)
        hits = np.take_along_axis(rel, order, axis=1)
        hits &= np.arange(max_k)[None, :] < n_candidates[:, None]
        n_rel = rel.sum(axis=1)
        out = {}
        for k in k_values:
            kk = min(k, max_k)
            hit_k = hits[:, :kk]
            n_hit = hit_k.sum(axis=1)
            ideal = np.minimum(k, n_rel)
            idcg = np.array([discounts[:min(int(m), max_k)].sum() for m in ideal])
            dcg = (hit_k * discounts[:kk]).sum(axis=1)
            out[f"precision@{k}"] = n_hit / k
            out[f"recall@{k}"] = n_hit / n_rel
            out[f"ndcg@{k}"] = dcg / idcg
        return out

    chunks = [users[i:i + chunk_size] for i in range(0, len(users), chunk_size)]
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, chunks))
    else:
        parts = [run(chunk) for chunk in chunks]
    values = {key: np.concatenate([p[key] for p in parts]) for key in parts[0]}

    result = RankingMetrics(
        k_values=k_values,
        precision={k: float(np.mean(values[f"precision@{k}"])) for k in k_values},
        recall={k: float(np.mean(values[f"recall@{k}"])) for k in k_values},
        ndcg={k: float(np.mean(values[f"ndcg@{k}"])) for k in k_values},
        n_users=len(users),
        label=label,
    )
    if per_user:
        result.per_user = {
            int(u): {name: {k: float(values[f"{name}@{k}"][row]) for k in k_values}
                     for name in METRIC_NAMES}
            for row, u in enumerate(users)
        }
    logger.debug("evaluated %d users: ndcg %s", len(users), result.ndcg)
    return result


def evaluate_recommender(model, train: InteractionSet, test: InteractionSet,
                         k_values: Sequence[int] = (5, 10),
                         extra_exclude: Sequence[InteractionSet] = (),
                         per_user: bool = False) -> RankingMetrics:
    """Forward a trained model once and rank its criterion-0 scores"""
    trace = model.forward(training=False)
    user_emb, item_emb = model.ranking_embeddings(trace)
    return rank_and_score(user_emb, item_emb, train, test, k_values, extra_exclude,
                          per_user=per_user, threads=model.config.threads, label=model.label)


def top_k(model, train: InteractionSet, user: int, k: int = 10,
          extra_exclude: Sequence[InteractionSet] = ()) -> List[Tuple[int, float]]:
    """Best k unseen items of one user as (item index, score)"""
    trace = model.forward(training=False)
    user_emb, item_emb = model.ranking_embeddings(trace)
    scores = item_emb @ user_emb[user]
    seen = train.user_items(0)[user]
    for other in extra_exclude:
        seen = np.union1d(seen, other.user_items(0)[user])
    scores[seen] = -np.inf
    order = np.argsort(-scores, kind="stable")[:max(0, min(k, train.n_items - len(seen)))]
    return [(int(i), float(scores[i])) for i in order]


def mean_pairwise_sq_distance(X: np.ndarray) -> float:
    """Mean of ||x_a - x_b||^2 over all n^2 ordered pairs, in closed form"""
    X = np.asarray(X, dtype=np.float64)
    mean_sq = float(np.mean(np.sum(X * X, axis=1)))
    centroid = X.mean(axis=0)
    return 2.0 * (mean_sq - float(centroid @ centroid))


@dataclass
class SmoothnessReport:
    """Per-layer pairwise distance summary of the propagated E tables"""

    layers: List[int]
    mean_distance: List[float]
    mean_sq_distance: List[float]
    histograms: List[Tuple[np.ndarray, np.ndarray]] = field(default_factory=list)
    n_nodes: int = 0

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "layer": self.layers,
            "mean_distance": self.mean_distance,
            "mean_sq_distance": self.mean_sq_distance,
            "n_nodes": self.n_nodes,
        })

    def histogram_frame(self) -> pd.DataFrame:
        rows = []
        for layer, (counts, edges) in zip(self.layers, self.histograms):
            for b, count in enumerate(counts):
                rows.append({"layer": layer, "bin_low": float(edges[b]),
                             "bin_high": float(edges[b + 1]), "count": int(count)})
        return pd.DataFrame(rows, columns=["layer", "bin_low", "bin_high", "count"])

    def write_csv(self, path: Union[str, Path]) -> None:
        self.to_frame().to_csv(path, index=False)

    def write_histogram_csv(self, path: Union[str, Path]) -> None:
        self.histogram_frame().to_csv(path, index=False)


def smoothness_report(trace: ForwardTrace, sample: Optional[np.ndarray] = None,
                      bins: int = 20, max_nodes: int = 2000,
                      rng: Optional[np.random.Generator] = None) -> SmoothnessReport:
    """
    Pairwise Euclidean distances among node embeddings after each layer

    Args:
        trace: Forward trace; the post-normalization E tables are measured
        sample: Node indices to measure; None samples up to max_nodes
        bins: Histogram bins per layer
        max_nodes: Sample size when sample is None
        rng: Sampling stream (required when the graph exceeds max_nodes)

    Returns:
        SmoothnessReport with one row per layer 0..L
    """
    n = trace.e_dot[0].shape[0]
    if sample is None:
        if n > max_nodes:
            if rng is None:
                raise ConfigError("an rng is required to sample nodes")
            sample = np.sort(rng.choice(n, size=max_nodes, replace=False))
        else:
            sample = np.arange(n)
    sample = np.asarray(sample, dtype=np.int64)

    report = SmoothnessReport(layers=[], mean_distance=[], mean_sq_distance=[], n_nodes=len(sample))
    for layer, table in enumerate(trace.e_dot):
        X = table[sample]
        dist = pdist(X)
        report.layers.append(layer)
        report.mean_distance.append(float(dist.mean()) if len(dist) else 0.0)
        report.mean_sq_distance.append(mean_pairwise_sq_distance(X))
        report.histograms.append(np.histogram(dist, bins=bins))
    return report
