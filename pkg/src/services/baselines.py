"""
LightGCN Baselines

- LightGCN: one graph of overall positives, uniform layer mean, no PairNorm,
  no preference stack.
- LightGCN_MC: one LightGCN per criterion graph; the per-criterion outputs
  are concatenated into a single (C+1)*d vector per user and item.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np

from src.config import TrainConfig
from src.core import model as cpa
from src.core.dataset import InteractionSet, restrict_criteria
from src.core.errors import ConfigError, EmptyDatasetError
from src.core.graph import McExpansionGraph, NodeLayout, NormalizedAdjacency, build_graph, normalize
from src.core.seeding import RngStreams
from src.services.bpr import BprBatch, bpr_loss, bpr_margin_grad
from src.services.recommender import CpaLgcRecommender, Params, Recommender, check_finite_loss

logger = logging.getLogger(__name__)


class BaselineKind(str, Enum):
    LIGHTGCN = "lightgcn"
    LIGHTGCN_MC = "lightgcn_mc"


def _lightgcn_trace(adj: NormalizedAdjacency, E0: np.ndarray, layers: int,
                    threads: int = 1) -> cpa.ForwardTrace:
    state = cpa.EmbeddingState(layout=adj.layout, E0=E0)
    return cpa.forward(adj, state, layers, pairnorm_enabled=False, threads=threads)


def lightgcn_forward(adj: NormalizedAdjacency, E0: np.ndarray, layers: int,
                     threads: int = 1) -> np.ndarray:
    """Mean of E0, A E0, ..., A^L E0"""
    return _lightgcn_trace(adj, E0, layers, threads).e_star_dot


def lightgcn_mc_forward(adjs: Sequence[NormalizedAdjacency], tables: Sequence[np.ndarray],
                        layers: int, threads: int = 1) -> Tuple[np.ndarray, np.ndarray]:
    """
    Run one LightGCN per criterion graph and concatenate

    Args:
        adjs: One normalized adjacency per criterion (each over users + items)
        tables: Matching initial tables
        layers: L
        threads: Segments run concurrently

    Returns:
        (user vectors, item vectors), each with (C+1)*d columns
    """
    if len(adjs) != len(tables):
        raise ConfigError(f"{len(adjs)} graphs but {len(tables)} embedding tables")
    traces = _segment_traces(adjs, tables, layers, threads)
    return _concat_segments(adjs, tables, traces)


def _segment_traces(adjs, tables, layers: int, threads: int) -> List[Optional[cpa.ForwardTrace]]:
    def run(c: int) -> Optional[cpa.ForwardTrace]:
        if adjs[c].matrix.nnz == 0:
            return None
        return _lightgcn_trace(adjs[c], tables[c], layers)

    if threads <= 1:
        return [run(c) for c in range(len(adjs))]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(run, range(len(adjs))))


def _concat_segments(adjs, tables, traces) -> Tuple[np.ndarray, np.ndarray]:
    user_parts, item_parts = [], []
    for adj, table, trace in zip(adjs, tables, traces):
        n_users = adj.layout.n_users
        # a criterion without positives contributes zeros
        out = np.zeros_like(table) if trace is None else trace.e_star_dot
        user_parts.append(out[:n_users])
        item_parts.append(out[n_users:])
    return np.hstack(user_parts), np.hstack(item_parts)


class LightGcnRecommender(CpaLgcRecommender):
    """LightGCN on overall ratings only (no alpha, no PairNorm, no preferences)"""

    kind = BaselineKind.LIGHTGCN.value

    def _graph_data(self, train: InteractionSet) -> InteractionSet:
        return restrict_criteria(train, 1)

    def _alpha(self) -> float:
        return 1.0

    def _with_preferences(self) -> bool:
        return False

    @property
    def pairnorm_enabled(self) -> bool:
        return False

    @property
    def label(self) -> str:
        return "LightGCN"


def _criterion_graph(train: InteractionSet, c: int) -> McExpansionGraph:
    layout = NodeLayout(train.n_users, train.n_items, 1)
    mask = train.criterion_mask(c)
    if not mask.any():
        logger.warning("criterion %d has no training positives; its segment stays zero", c)
        empty = np.zeros(0, dtype=np.int64)
        return McExpansionGraph(layout=layout, src=empty, dst=empty.copy(),
                                weight=np.zeros(0), weighted_degree=np.zeros(layout.node_count))
    kept = train.subset(mask)
    single = InteractionSet(
        user_ids=kept.user_ids,
        item_ids=kept.item_ids,
        n_criteria_plus1=1,
        users=kept.users,
        items=kept.items,
        criteria=np.zeros(len(kept), dtype=np.int64),
        weights=kept.weights,
    )
    return build_graph(single, alpha=1.0)


class LightGcnMcRecommender(Recommender):
    """One LightGCN per criterion, outputs concatenated"""

    kind = BaselineKind.LIGHTGCN_MC.value

    def __init__(self, train: InteractionSet, config: TrainConfig,
                 streams: Optional[RngStreams] = None):
        super().__init__(config)
        streams = streams or RngStreams(config.seed)
        self.graphs = [_criterion_graph(train, c) for c in range(train.n_criteria_plus1)]
        if self.graphs[0].n_edges == 0:
            raise EmptyDatasetError("no overall positives to train LightGCN_MC on")
        self.adjs = [normalize(g) for g in self.graphs]
        rng = streams.get("init")
        self.tables = [cpa.xavier_uniform(rng, g.node_count, config.dim) for g in self.graphs]
        logger.info("%s: %d segments, %d parameters", self.label, len(self.graphs),
                    self.parameter_count())

    @property
    def label(self) -> str:
        return "LightGCN_MC"

    @property
    def sampling_graph(self) -> McExpansionGraph:
        return self.graphs[0]

    @property
    def n_users(self) -> int:
        return self.graphs[0].n_users

    def params(self) -> Params:
        return {f"E0_c{c}": table for c, table in enumerate(self.tables)}

    def set_params(self, params: Params) -> None:
        self.tables = [params[f"E0_c{c}"] for c in range(len(self.tables))]

    def header(self):
        header = super().header()
        header["layout"]["C"] = len(self.graphs) - 1
        return header

    def forward(self, training: bool = False) -> List[Optional[cpa.ForwardTrace]]:
        return _segment_traces(self.adjs, self.tables, self.config.layers, self.config.threads)

    def ranking_embeddings(self, trace) -> Tuple[np.ndarray, np.ndarray]:
        return _concat_segments(self.adjs, self.tables, trace)

    def loss_and_grads(self, trace, batch: BprBatch) -> Tuple[float, Params]:
        lam = self.config.reg_lambda
        n_users = self.n_users
        U, I = self.ranking_embeddings(trace)
        pos_items = batch.pos - n_users
        neg_items = batch.neg - n_users
        h_u, h_p, h_n = U[batch.users], I[pos_items], I[neg_items]
        s_pos = np.sum(h_u * h_p, axis=1)
        s_neg = np.sum(h_u * h_n, axis=1)

        users = np.unique(batch.users)
        items = np.unique(np.concatenate([pos_items, neg_items]))
        rows = np.concatenate([users, n_users + items])
        reg = float(sum(np.sum(table[rows] ** 2) for table in self.tables))
        loss = check_finite_loss(bpr_loss(s_pos, s_neg, reg, lam))

        g = bpr_margin_grad(s_pos, s_neg)[:, None]
        G_U = np.zeros_like(U)
        G_I = np.zeros_like(I)
        np.add.at(G_U, batch.users, g * (h_p - h_n))
        np.add.at(G_I, pos_items, g * h_u)
        np.add.at(G_I, neg_items, -g * h_u)

        d = self.config.dim
        grads = {}
        for c, (adj, table, seg) in enumerate(zip(self.adjs, self.tables, trace)):
            cols = slice(c * d, (c + 1) * d)
            if seg is None:
                grad = np.zeros_like(table)
            else:
                G = np.vstack([G_U[:, cols], G_I[:, cols]])
                grad, _ = cpa.backward(adj, seg, G, threads=self.config.threads)
            grad[rows] += 2.0 * lam * table[rows]
            grads[f"E0_c{c}"] = grad
        return loss, grads
