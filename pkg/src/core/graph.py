"""
MC Expansion Graph

Every item is expanded into C+1 criterion-item nodes; a user is linked to
criterion-item node (i, c) when the (u, i, c) rating is positive. Node
layout is fixed: users first, then one block of items per criterion,
so node(i, c) = n_users + c * n_items + i.
"""

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Union

import numpy as np
import pandas as pd
import scipy.sparse as sp

from src.core.dataset import InteractionSet
from src.core.errors import DimensionMismatchError, EmptyDatasetError, GraphError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class NodeLayout:
    """Index space of the expansion graph"""

    n_users: int
    n_items: int
    n_criteria_plus1: int

    @property
    def node_count(self) -> int:
        return self.n_users + self.n_criteria_plus1 * self.n_items

    def item_node(self, item, criterion=0):
        """Node index of criterion-item (i, c); works elementwise on arrays"""
        return self.n_users + criterion * self.n_items + item

    def item_block(self, criterion: int = 0) -> slice:
        start = self.n_users + criterion * self.n_items
        return slice(start, start + self.n_items)

    def criterion_of(self, node: np.ndarray) -> np.ndarray:
        return (np.asarray(node) - self.n_users) // self.n_items

    def to_dict(self) -> Dict[str, int]:
        return {
            "n_users": self.n_users,
            "n_items": self.n_items,
            "C": self.n_criteria_plus1 - 1,
        }

    @classmethod
    def from_dict(cls, raw: Dict) -> "NodeLayout":
        return cls(int(raw["n_users"]), int(raw["n_items"]), int(raw["C"]) + 1)


@dataclass(frozen=True, eq=False)
class McExpansionGraph:
    """Weighted bipartite graph between users and criterion-item nodes"""

    layout: NodeLayout
    src: np.ndarray
    dst: np.ndarray
    weight: np.ndarray
    weighted_degree: np.ndarray

    @property
    def n_users(self) -> int:
        return self.layout.n_users

    @property
    def n_items(self) -> int:
        return self.layout.n_items

    @property
    def n_criteria_plus1(self) -> int:
        return self.layout.n_criteria_plus1

    @property
    def node_count(self) -> int:
        return self.layout.node_count

    @property
    def n_edges(self) -> int:
        return len(self.src)

    def adjacency(self) -> sp.csr_matrix:
        """Symmetric |V| x |V| weighted adjacency A"""
        n = self.node_count
        rows = np.concatenate([self.src, self.dst])
        cols = np.concatenate([self.dst, self.src])
        data = np.concatenate([self.weight, self.weight])
        return sp.csr_matrix((data, (rows, cols)), shape=(n, n))

    def user_neighbors(self) -> sp.csr_matrix:
        """n_users x |V| incidence with the edge weights, rows sorted"""
        mat = sp.csr_matrix(
            (self.weight, (self.src, self.dst)), shape=(self.n_users, self.node_count)
        )
        mat.sort_indices()
        return mat


@dataclass(frozen=True, eq=False)
class NormalizedAdjacency:
    """D^-1/2 A D^-1/2 of an expansion graph, precomputed once"""

    layout: NodeLayout
    matrix: sp.csr_matrix

    @property
    def node_count(self) -> int:
        return self.layout.node_count

    def coef(self, a: int, b: int) -> float:
        return float(self.matrix[a, b])

    def to_dense(self) -> np.ndarray:
        return self.matrix.toarray()


def build_graph(train: InteractionSet, alpha: float = 1.5,
                use_rating_weights: bool = False) -> McExpansionGraph:
    """
    Build the MC expansion graph from training positives

    Args:
        train: Training interactions
        alpha: Weight of criterion-0 edges; other edges weigh 1
        use_rating_weights: Multiply by the stored rating values

    Returns:
        McExpansionGraph with one edge per positive
    """
    if len(train) == 0:
        raise EmptyDatasetError("cannot build a graph from an empty training set")
    if not alpha > 0:
        raise GraphError(f"alpha must be > 0, got {alpha}")

    layout = NodeLayout(train.n_users, train.n_items, train.n_criteria_plus1)
    src = train.users.copy()
    dst = layout.item_node(train.items, train.criteria).astype(np.int64)
    weight = np.where(train.criteria == 0, float(alpha), 1.0)
    if use_rating_weights:
        if train.weights is None:
            raise GraphError("rating weights requested but the interaction set has none")
        weight = weight * train.weights
        if not (weight > 0).all():
            raise GraphError("rating-valued edge weights must be positive")

    degree = np.bincount(src, weights=weight, minlength=layout.node_count)
    degree += np.bincount(dst, weights=weight, minlength=layout.node_count)

    graph = McExpansionGraph(layout=layout, src=src, dst=dst, weight=weight, weighted_degree=degree)
    n_overall = int(np.count_nonzero(train.criteria == 0))
    logger.debug("graph: %d nodes, %d edges (%d overall)", layout.node_count, graph.n_edges, n_overall)
    return graph


def normalize(g: McExpansionGraph) -> NormalizedAdjacency:
    """Symmetric normalization w / sqrt(deg_u * deg_ic); zero-degree rows stay empty"""
    adj = g.adjacency().tocoo()
    deg = g.weighted_degree
    coef = adj.data / np.sqrt(deg[adj.row] * deg[adj.col])
    norm_adj = sp.csr_matrix((coef, (adj.row, adj.col)), shape=adj.shape)
    norm_adj.sort_indices()
    return NormalizedAdjacency(layout=g.layout, matrix=norm_adj)


def propagate(adj: NormalizedAdjacency, X: np.ndarray, threads: int = 1) -> np.ndarray:
    """
    One LGC step: row v of the output is sum over neighbors n of coef(v, n) * X[n]

    Args:
        adj: Normalized adjacency
        X: |V| x d node features
        threads: Row partitions computed concurrently

    Returns:
        |V| x d propagated features
    """
    if X.ndim != 2 or X.shape[0] != adj.node_count:
        raise DimensionMismatchError(
            f"feature table has shape {X.shape}, graph has {adj.node_count} nodes"
        )
    if threads <= 1 or adj.node_count < 2 * threads:
        return np.asarray(adj.matrix @ X)

    bounds = np.linspace(0, adj.node_count, threads + 1).astype(int)
    out = np.empty((adj.node_count, X.shape[1]), dtype=np.result_type(X, adj.matrix.dtype))

    def run(part: int) -> None:
        lo, hi = bounds[part], bounds[part + 1]
        out[lo:hi] = adj.matrix[lo:hi] @ X

    with ThreadPoolExecutor(max_workers=threads) as pool:
        list(pool.map(run, range(threads)))
    return out


def export_graph(g: McExpansionGraph, directory: Union[str, Path]) -> List[Path]:
    """Write edges.tsv (src, dst, weight) and header.json"""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    edges_path = directory / "edges.tsv"
    header_path = directory / "header.json"
    pd.DataFrame({"src": g.src, "dst": g.dst, "weight": g.weight}).to_csv(
        edges_path, sep="\t", header=False, index=False
    )
    with open(header_path, "w") as f:
        json.dump(g.layout.to_dict(), f, indent=4)
    return [header_path, edges_path]
