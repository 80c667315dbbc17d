"""
Experiments

Hyperparameter sweeps, repeated model comparisons over seeds and the
epoch-time scaling benchmark.
"""

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.stats import linregress

from src.config import TrainConfig
from src.core.dataset import DatasetSplits, restrict_criteria
from src.core.errors import ConfigError
from src.core.seeding import RngStreams
from src.services.bpr import BprSampler
from src.services.evaluation import evaluate_recommender
from src.services.synthetic import random_interactions
from src.services.training import (
    AdamState, TrainResult, epoch_batches, get_recommender, run_epoch, train,
)

logger = logging.getLogger(__name__)

SWEEP_PARAMETERS = ("layers", "dim", "alpha", "n_criteria")


@dataclass
class ExperimentRow:
    """One trained model's validation-selected test NDCG@10"""

    label: str
    value: object
    seed: int
    val_ndcg10: float
    test_ndcg10: float
    epochs: int


def rows_frame(rows: Sequence[ExperimentRow]) -> pd.DataFrame:
    return pd.DataFrame([vars(r) for r in rows],
                        columns=["label", "value", "seed", "val_ndcg10", "test_ndcg10", "epochs"])


def heldout_ndcg(result: TrainResult, splits: DatasetSplits, k: int = 10) -> float:
    """NDCG@k on test, excluding train (and valid, when configured) items"""
    config = result.model.config
    extra = (splits.valid,) if config.exclude_valid else ()
    metrics = evaluate_recommender(result.model, splits.train, splits.test, (k,), extra)
    return metrics.ndcg[k]


def _restrict_splits(splits: DatasetSplits, k: int) -> DatasetSplits:
    return DatasetSplits(*(restrict_criteria(part, k) for part in splits))


def sweep(config: TrainConfig, parameter: str, values: Sequence, splits: DatasetSplits,
          kind: str = "cpa_lgc", progress: bool = False) -> List[ExperimentRow]:
    """
    Train one model per value with the shared seed

    Args:
        config: Template configuration
        parameter: One of layers, dim, alpha, n_criteria
        values: Values to try; for n_criteria, k keeps criteria 0..k-1
        splits: Dataset splits
        kind: Model kind
        progress: Show per-run progress bars

    Returns:
        One ExperimentRow per value, in the given order
    """
    if parameter not in SWEEP_PARAMETERS:
        raise ConfigError(f"sweep parameter must be one of {SWEEP_PARAMETERS}, got '{parameter}'")
    rows = []
    for value in values:
        if parameter == "n_criteria":
            run_splits, run_config = _restrict_splits(splits, int(value)), config
        else:
            run_splits, run_config = splits, config.replace(**{parameter: value})
        result = train(run_splits, run_config, kind, RngStreams(run_config.seed), progress=progress)
        row = ExperimentRow(
            label=result.model.label,
            value=value,
            seed=run_config.seed,
            val_ndcg10=result.best_val_ndcg,
            test_ndcg10=heldout_ndcg(result, run_splits),
            epochs=len(result.log),
        )
        logger.info("sweep %s=%s: test NDCG@10 %.4f", parameter, value, row.test_ndcg10)
        rows.append(row)
    return rows


@dataclass(frozen=True)
class ModelSpec:
    """A model to compare: kind plus the CPA-LGC variant (ignored by baselines)"""

    kind: str = "cpa_lgc"
    variant: str = "full"


def compare(models: Sequence[ModelSpec], splits_factory: Callable[[int], DatasetSplits],
            config: TrainConfig, repeats: int = 1,
            progress: bool = False) -> Tuple[List[ExperimentRow], pd.DataFrame]:
    """
    Train every model on every repeat seed and average test NDCG@10

    Repeat r uses seed config.seed + r for both the split and the
    initialization, so all models of one repeat see the same split.

    Returns:
        (per-run rows, summary frame with mean/std per label)
    """
    if repeats < 1:
        raise ConfigError(f"repeats must be >= 1, got {repeats}")
    rows = []
    for r in range(repeats):
        seed = config.seed + r
        splits = splits_factory(seed)
        for spec in models:
            run_config = config.replace(seed=seed, variant=spec.variant)
            result = train(splits, run_config, spec.kind, RngStreams(seed), progress=progress)
            rows.append(ExperimentRow(
                label=result.model.label,
                value=spec.kind,
                seed=seed,
                val_ndcg10=result.best_val_ndcg,
                test_ndcg10=heldout_ndcg(result, splits),
                epochs=len(result.log),
            ))
            logger.info("compare seed %d %s: test NDCG@10 %.4f", seed, rows[-1].label,
                        rows[-1].test_ndcg10)
    frame = rows_frame(rows)
    summary = (frame.groupby("label", sort=False)["test_ndcg10"]
               .agg(["mean", "std", "count"]).reset_index())
    return rows, summary


@dataclass
class BenchReport:
    """Seconds per epoch against edge count, with a linear fit"""

    n_edges: List[int] = field(default_factory=list)
    seconds: List[float] = field(default_factory=list)
    r_squared: float = float("nan")
    slope: float = float("nan")

    @property
    def ratios(self) -> List[float]:
        return [float("nan")] + [b / a for a, b in zip(self.seconds, self.seconds[1:])]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "n_edges": self.n_edges,
            "seconds_per_epoch": self.seconds,
            "ratio": self.ratios,
        })

    def summary(self) -> Dict[str, Optional[float]]:
        return {
            "r_squared": None if math.isnan(self.r_squared) else self.r_squared,
            "slope": None if math.isnan(self.slope) else self.slope,
        }


def time_epoch(n_edges: int, config: TrainConfig, n_criteria_plus1: int = 4,
               repeats: int = 3) -> float:
    """
    Median wall time of one training epoch on a random graph

    The epoch is the one train() runs: epoch_batches() picks the step count
    and batch size from the graph's edge count and config.
    """
    iset = random_interactions(n_edges, n_criteria_plus1, seed=config.seed)
    streams = RngStreams(config.seed)
    model = get_recommender("cpa_lgc", iset, config, streams)
    sampler = BprSampler(model.sampling_graph, config.negative_mode)
    rng = streams.get("sampler")
    n_batches, batch_size = epoch_batches(model.sampling_graph.n_edges, config)
    adam = AdamState.zeros_like(model.params())
    timings = []
    for _ in range(repeats):
        started = time.perf_counter()
        _, adam = run_epoch(model, sampler, adam, rng, n_batches, batch_size)
        timings.append(time.perf_counter() - started)
    return float(np.median(timings))


def bench_linear_scaling(sizes: Sequence[int], config: TrainConfig,
                         n_criteria_plus1: int = 4, repeats: int = 3) -> BenchReport:
    """
    Per-epoch time at increasing edge counts

    Args:
        sizes: Strictly increasing edge counts
        config: Model configuration, including the batch plan
        n_criteria_plus1: Criteria of the random graphs
        repeats: Timed epochs per size (median reported)

    Returns:
        BenchReport; r_squared is NaN with fewer than three sizes
    """
    sizes = [int(s) for s in sizes]
    if not sizes or any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ConfigError(f"sizes must be strictly increasing, got {sizes}")
    report = BenchReport()
    for n_edges in sizes:
        seconds = time_epoch(n_edges, config, n_criteria_plus1, repeats)
        report.n_edges.append(n_edges)
        report.seconds.append(seconds)
        logger.info("bench |E|=%d: %.4fs per epoch", n_edges, seconds)
    if len(sizes) >= 3:
        fit = linregress(report.n_edges, report.seconds)
        report.r_squared = float(fit.rvalue ** 2)
        report.slope = float(fit.slope)
    elif len(sizes) == 2:
        report.slope = (report.seconds[1] - report.seconds[0]) / (sizes[1] - sizes[0])
    return report

