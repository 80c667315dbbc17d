"""
Synthetic Data

- generate_synthetic: planted-preference multi-criteria rating logs where
  criteria ratings carry signal about overall preference
- random_interactions: uniform random positives with an exact edge count,
  used by the scaling benchmark
"""

import logging
from typing import List

import numpy as np
import pandas as pd

from src.core.dataset import COLUMNS, CriterionSpec, InteractionSet, RatingLog
from src.core.errors import ConfigError
from src.core.seeding import RngStreams

logger = logging.getLogger(__name__)

SCALE_MIN, SCALE_MAX = 1.0, 5.0


def synthetic_specs(n_criteria: int) -> List[CriterionSpec]:
    """Overall plus n_criteria criteria, all on a 1-5 scale with the median rule"""
    names = ["overall"] + [f"criterion_{c}" for c in range(1, n_criteria + 1)]
    return [CriterionSpec(c, name, SCALE_MIN, SCALE_MAX) for c, name in enumerate(names)]


def _to_scale(x: np.ndarray) -> np.ndarray:
    return np.round(SCALE_MIN + (SCALE_MAX - SCALE_MIN) * np.clip(x, 0.0, 1.0), 2)


def generate_synthetic(n_users: int, n_items: int, n_criteria: int, density: float,
                       noise: float, seed: int, dominance: float = 0.7,
                       exposure: float = 4.0) -> RatingLog:
    """
    Planted-preference rating log

    Each user weighs the criteria with one dominant criterion; each item has
    a quality in [0, 1] per criterion. A user rates a density share of the
    catalog, drawn with probability proportional to exp(exposure * affinity).
    The criterion-c rating reflects item quality on c, the overall rating the
    preference-weighted blend; criteria ratings get half the overall noise.

    Args:
        n_users: Users
        n_items: Items
        n_criteria: C (criteria besides overall)
        density: Share of items each user rates, in (0, 1]
        noise: Rating noise standard deviation, in [0, 1)
        seed: Generator seed
        dominance: Weight mass on the dominant criterion
        exposure: Sharpness of affinity-driven item exposure

    Returns:
        RatingLog with C+1 ratings per rated (user, item)
    """
    if n_users < 1 or n_items < 1 or n_criteria < 1:
        raise ConfigError("n_users, n_items and n_criteria must be positive")
    if not 0.0 < density <= 1.0:
        raise ConfigError(f"density must be in (0, 1], got {density}")
    if not 0.0 <= noise < 1.0:
        raise ConfigError(f"noise must be in [0, 1), got {noise}")
    if not 0.0 <= dominance <= 1.0:
        raise ConfigError(f"dominance must be in [0, 1], got {dominance}")

    rng = RngStreams(seed).fresh("synthetic")
    dominant = rng.integers(0, n_criteria, size=n_users)
    weights = np.full((n_users, n_criteria), (1.0 - dominance) / n_criteria)
    weights[np.arange(n_users), dominant] += dominance
    quality = rng.uniform(0.0, 1.0, size=(n_items, n_criteria))
    affinity = weights @ quality.T

    per_user = max(1, int(round(density * n_items)))
    user_col, item_col = [], []
    for u in range(n_users):
        logits = exposure * affinity[u]
        p = np.exp(logits - logits.max())
        p /= p.sum()
        chosen = np.sort(rng.choice(n_items, size=per_user, replace=False, p=p))
        user_col.append(np.full(per_user, u))
        item_col.append(chosen)
    users = np.concatenate(user_col)
    items = np.concatenate(item_col)

    overall = _to_scale(affinity[users, items] + rng.normal(0.0, noise, size=len(users)))
    criteria = _to_scale(quality[items] + rng.normal(0.0, noise / 2.0, size=(len(users), n_criteria)))

    n_pairs = len(users)
    frame = pd.DataFrame({
        "user": np.repeat([f"u{u}" for u in users], n_criteria + 1),
        "item": np.repeat([f"i{i}" for i in items], n_criteria + 1),
        "criterion": np.tile(np.arange(n_criteria + 1), n_pairs),
        "value": np.column_stack([overall, criteria]).reshape(-1),
    }, columns=COLUMNS)
    logger.info("synthetic log: %d users, %d items, C=%d, %d ratings",
                n_users, n_items, n_criteria, len(frame))
    return RatingLog(frame=frame, specs=tuple(synthetic_specs(n_criteria)))


def random_interactions(n_edges: int, n_criteria_plus1: int = 4, seed: int = 0) -> InteractionSet:
    """
    Exactly n_edges distinct random positives for timing runs

    The user and item counts grow with sqrt(n_edges) so the node count
    never exceeds the edge count by much; criterion 0 gets one edge per
    user at least.
    """
    if n_edges < 1 or n_criteria_plus1 < 1:
        raise ConfigError("n_edges and n_criteria_plus1 must be positive")
    n_users = max(10, int(np.ceil(2.0 * np.sqrt(n_edges))))
    n_items = max(10, int(np.ceil(np.sqrt(n_edges))))
    total = n_users * n_items * n_criteria_plus1
    if n_edges > total:
        raise ConfigError(f"cannot place {n_edges} edges in a {total}-cell grid")
    rng = RngStreams(seed).fresh("bench")

    n_anchor = min(n_users, n_edges)
    anchor_items = rng.integers(0, n_items, size=n_anchor)
    anchors = np.arange(n_anchor) * n_items + anchor_items  # criterion 0 block
    rest = rng.choice(total, size=min(total, n_edges + n_anchor), replace=False)
    rest = rest[~np.isin(rest, anchors)][:n_edges - n_anchor]
    keys = np.concatenate([anchors, rest])

    criteria, remainder = np.divmod(keys, n_users * n_items)
    users, items = np.divmod(remainder, n_items)
    return InteractionSet(
        user_ids=tuple(f"u{u}" for u in range(n_users)),
        item_ids=tuple(f"i{i}" for i in range(n_items)),
        n_criteria_plus1=n_criteria_plus1,
        users=users,
        items=items,
        criteria=criteria,
    )
