"""
BPR sampling and loss.

One triple per sampled positive edge: the user comes with the edge, the
negative is drawn uniformly among criterion-item nodes the user is not
linked to (rejection sampling).
"""

import logging
from dataclasses import dataclass
from typing import List

import numpy as np
from scipy.special import expit

from src.core.errors import ConfigError
from src.core.graph import McExpansionGraph

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BprTriple:
    u: int
    pos: int
    neg: int


@dataclass(frozen=True, eq=False)
class BprBatch:
    """Vectorized triples; pos/neg are node indices of the sampling graph"""

    users: np.ndarray
    pos: np.ndarray
    neg: np.ndarray

    def __len__(self) -> int:
        return len(self.users)

    def triples(self) -> List[BprTriple]:
        return [BprTriple(int(u), int(p), int(n))
                for u, p, n in zip(self.users, self.pos, self.neg)]

    @classmethod
    def empty(cls) -> "BprBatch":
        none = np.zeros(0, dtype=np.int64)
        return cls(none, none.copy(), none.copy())


class BprSampler:
    """
    Precomputed edge lookup for repeated batch sampling.

    negative_mode "any" draws negatives over all criterion-item nodes,
    "overall" only over the criterion-0 block.
    """

    def __init__(self, graph: McExpansionGraph, negative_mode: str = "any"):
        if negative_mode not in ("any", "overall"):
            raise ConfigError(f"unknown negative mode '{negative_mode}'")
        layout = graph.layout
        self.node_count = layout.node_count
        if negative_mode == "any":
            self.low, self.high = layout.n_users, layout.node_count
        else:
            block = layout.item_block(0)
            self.low, self.high = block.start, block.stop
        self.edge_keys = np.sort(graph.src * self.node_count + graph.dst)

        in_range = (graph.dst >= self.low) & (graph.dst < self.high)
        linked = np.bincount(graph.src[in_range], minlength=layout.n_users)
        saturated = linked >= (self.high - self.low)
        if saturated.any():
            logger.warning("skipping %d users linked to every candidate negative",
                           int(saturated.sum()))
        keep = ~saturated[graph.src]
        self.src = graph.src[keep]
        self.dst = graph.dst[keep]

    def _linked(self, users: np.ndarray, nodes: np.ndarray) -> np.ndarray:
        query = users * self.node_count + nodes
        idx = np.searchsorted(self.edge_keys, query)
        idx = np.minimum(idx, len(self.edge_keys) - 1)
        return self.edge_keys[idx] == query

    def sample(self, batch_size: int, rng: np.random.Generator) -> BprBatch:
        """
        Draw one mini-batch

        Args:
            batch_size: Number of triples
            rng: Sampler stream

        Returns:
            BprBatch with users drawn proportional to their edge count
        """
        if batch_size <= 0 or len(self.src) == 0:
            if batch_size > 0:
                logger.warning("no eligible positive edges to sample from")
            return BprBatch.empty()
        picks = rng.integers(0, len(self.src), size=batch_size)
        users = self.src[picks]
        pos = self.dst[picks]
        neg = rng.integers(self.low, self.high, size=batch_size)
        bad = self._linked(users, neg)
        while bad.any():
            redraw = rng.integers(self.low, self.high, size=int(bad.sum()))
            neg[bad] = redraw
            still = self._linked(users[bad], redraw)
            bad[np.flatnonzero(bad)[~still]] = False
        return BprBatch(users=users, pos=pos, neg=neg)


def sample_batch(train_graph: McExpansionGraph, batch_size: int, rng: np.random.Generator,
                 negative_mode: str = "any") -> BprBatch:
    """One-off batch; training loops keep a BprSampler instead"""
    return BprSampler(train_graph, negative_mode).sample(batch_size, rng)


def bpr_loss(scores_pos: np.ndarray, scores_neg: np.ndarray, reg_norm_sq: float,
             reg_lambda: float) -> float:
    """
    Sum of -ln sigmoid(pos - neg) plus lambda * reg_norm_sq

    -ln sigmoid(x) = softplus(-x), evaluated as logaddexp(0, -x) so large
    margins of either sign stay finite.
    """
    scores_pos = np.asarray(scores_pos, dtype=np.float64)
    scores_neg = np.asarray(scores_neg, dtype=np.float64)
    if scores_pos.shape != scores_neg.shape:
        raise ConfigError(f"score vectors differ in shape: {scores_pos.shape} vs {scores_neg.shape}")
    margin = scores_pos - scores_neg
    return float(np.sum(np.logaddexp(0.0, -margin)) + reg_lambda * reg_norm_sq)


def bpr_margin_grad(scores_pos: np.ndarray, scores_neg: np.ndarray) -> np.ndarray:
    """d(-ln sigmoid(margin)) / d margin = -sigmoid(-margin)"""
    return -expit(-(np.asarray(scores_pos) - np.asarray(scores_neg)))
