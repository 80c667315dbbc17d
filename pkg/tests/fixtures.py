"""
Shared test data builders.
"""

import os
from pathlib import Path
from typing import Sequence

import numpy as np

from src.core.dataset import CriterionSpec, InteractionSet

SLOW = os.environ.get("MCREC_SLOW") == "1"


def specs_1_to_5(n_criteria: int) -> list:
    """Overall plus n_criteria criteria on 1-5 scales with the median rule"""
    return [CriterionSpec(c, f"c{c}", 1.0, 5.0) for c in range(n_criteria + 1)]


def write_lines(path: Path, lines: Sequence[str]) -> Path:
    with open(path, "w") as f:
        f.write("\n".join(lines) + ("\n" if lines else ""))
    return path


def random_interactions(n_users: int, n_items: int, n_criteria_plus1: int, density: float,
                        seed: int = 0) -> InteractionSet:
    """Random positives where every user has at least one overall positive"""
    rng = np.random.default_rng(seed)
    mask = rng.random((n_criteria_plus1, n_users, n_items)) < density
    mask[0, np.arange(n_users), rng.integers(0, n_items, size=n_users)] = True
    criteria, users, items = np.nonzero(mask)
    return InteractionSet(
        user_ids=tuple(f"u{u}" for u in range(n_users)),
        item_ids=tuple(f"i{i}" for i in range(n_items)),
        n_criteria_plus1=n_criteria_plus1,
        users=users,
        items=items,
        criteria=criteria,
        weights=rng.uniform(3.0, 5.0, size=len(users)),
    )


def dense_normalized(iset_graph) -> np.ndarray:
    """Dense D^-1/2 A D^-1/2 computed independently of normalize()"""
    n = iset_graph.node_count
    A = np.zeros((n, n))
    for s, d, w in zip(iset_graph.src, iset_graph.dst, iset_graph.weight):
        A[s, d] += w
        A[d, s] += w
    deg = A.sum(axis=1)
    inv = np.zeros(n)
    inv[deg > 0] = 1.0 / np.sqrt(deg[deg > 0])
    return inv[:, None] * A * inv[None, :]


def numeric_grad(fn, X: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Central differences of scalar fn at X (X is perturbed in place and restored)"""
    grad = np.zeros_like(X)
    for idx in np.ndindex(*X.shape):
        old = X[idx]
        X[idx] = old + eps
        up = fn(X)
        X[idx] = old - eps
        down = fn(X)
        X[idx] = old
        grad[idx] = (up - down) / (2 * eps)
    return grad


def tiny_splits(n_users: int = 12, n_items: int = 10, n_criteria_plus1: int = 3,
                density: float = 0.6, seed: int = 0):
    """Random interactions split so that every user has valid and test positives"""
    from src.core.dataset import split
    return split(random_interactions(n_users, n_items, n_criteria_plus1, density, seed),
                 (0.6, 0.2, 0.2), seed=seed)


def planted_small_splits(seed: int = 0):
    """Small planted-preference dataset, binarized and split"""
    from src.core.dataset import binarize, filter_min_interactions, split
    from src.services.synthetic import generate_synthetic
    log = generate_synthetic(150, 60, 3, 0.3, 0.1, seed=0)
    return split(filter_min_interactions(binarize(log), 3), (0.6, 0.2, 0.2), seed=seed)
