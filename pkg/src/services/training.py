"""
Training Loop

Mini-batch BPR with Adam, validation NDCG@10 after every epoch and early
stopping on it. Every model kind goes through the same loop via the
Recommender interface; get_recommender picks the implementation.
"""

import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from tqdm import tqdm

from src.config import TrainConfig
from src.core.dataset import DatasetSplits, InteractionSet
from src.core.errors import ConfigError, DimensionMismatchError, EvaluationError, NumericError
from src.core.seeding import RngStreams
from src.services.baselines import BaselineKind, LightGcnMcRecommender, LightGcnRecommender
from src.services.bpr import BprBatch, BprSampler
from src.services.evaluation import rank_and_score
from src.services.recommender import CpaLgcRecommender, Params, Recommender

logger = logging.getLogger(__name__)

VALIDATION_K = 10

MODEL_KINDS = {
    CpaLgcRecommender.kind: CpaLgcRecommender,
    BaselineKind.LIGHTGCN.value: LightGcnRecommender,
    BaselineKind.LIGHTGCN_MC.value: LightGcnMcRecommender,
}


def get_recommender(kind: str, train: InteractionSet, config: TrainConfig,
                    streams: Optional[RngStreams] = None) -> Recommender:
    """
    Factory function to get a model by kind

    Args:
        kind: "cpa_lgc", "lightgcn" or "lightgcn_mc"
        train: Training interactions
        config: Hyperparameters (variant applies to cpa_lgc)
        streams: Random streams; None derives them from config.seed

    Returns:
        Freshly initialized Recommender
    """
    model_class = MODEL_KINDS.get(kind)
    if model_class is None:
        raise ConfigError(f"unknown model kind '{kind}', expected one of {sorted(MODEL_KINDS)}")
    return model_class(train, config, streams or RngStreams(config.seed))


def backward(model: Recommender, trace, batch: BprBatch) -> Params:
    """Gradient of the batch BPR loss for every trainable table of model"""
    return model.loss_and_grads(trace, batch)[1]


@dataclass
class AdamState:
    """First/second moments per table plus the step counter"""

    m: Dict[str, np.ndarray]
    v: Dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: Params) -> "AdamState":
        return cls(
            m={name: np.zeros_like(value) for name, value in params.items()},
            v={name: np.zeros_like(value) for name, value in params.items()},
        )


def adam_step(params: Params, grads: Params, state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> Tuple[Params, AdamState]:
    """
    One bias-corrected Adam update

    Args:
        params: Current tables
        grads: Gradients keyed like params
        state: Moments from the previous step
        lr: Learning rate
        beta1, beta2, eps: Adam constants

    Returns:
        (new params, new state); inputs are not modified
    """
    t = state.t + 1
    new_params, new_m, new_v = {}, {}, {}
    for name, value in params.items():
        grad = grads[name]
        if grad.shape != value.shape:
            raise DimensionMismatchError(
                f"gradient of {name} has shape {grad.shape}, table has {value.shape}"
            )
        m = beta1 * state.m[name] + (1.0 - beta1) * grad
        v = beta2 * state.v[name] + (1.0 - beta2) * grad * grad
        m_hat = m / (1.0 - beta1 ** t)
        v_hat = v / (1.0 - beta2 ** t)
        new_params[name] = value - lr * m_hat / (np.sqrt(v_hat) + eps)
        new_m[name], new_v[name] = m, v
    return new_params, AdamState(m=new_m, v=new_v, t=t)


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    val_ndcg10: float
    seconds: float


@dataclass
class TrainResult:
    """Trained model (best validation parameters) plus its training log"""

    model: Recommender
    log: List[EpochRecord] = field(default_factory=list)
    initial_val_ndcg: float = float("nan")
    best_epoch: int = 0
    best_val_ndcg: float = float("nan")
    diverged: bool = False

    def log_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [vars(record) for record in self.log],
            columns=["epoch", "loss", "val_ndcg10", "seconds"],
        )

    def write_log_csv(self, path: Union[str, Path]) -> None:
        self.log_frame().to_csv(path, index=False)

    def summary(self) -> Dict:
        return {
            "label": self.model.label,
            "epochs": len(self.log),
            "best_epoch": self.best_epoch,
            "initial_val_ndcg10": self.initial_val_ndcg,
            "best_val_ndcg10": self.best_val_ndcg,
            "diverged": self.diverged,
        }


def _validation_ndcg(model: Recommender, splits: DatasetSplits) -> float:
    trace = model.forward(training=False)
    user_emb, item_emb = model.ranking_embeddings(trace)
    metrics = rank_and_score(user_emb, item_emb, splits.train, splits.valid,
                             k_values=(VALIDATION_K,), threads=model.config.threads)
    return metrics.ndcg[VALIDATION_K]


def _snapshot(params: Params) -> Params:
    return {name: value.copy() for name, value in params.items()}


def epoch_batches(n_edges: int, config: TrainConfig) -> Tuple[int, int]:
    """
    Steps per epoch and triples per step

    Every step propagates over the whole graph, so the step count is capped
    at config.max_batches_per_epoch and the batch grows past batch_size
    instead. An epoch then costs O(L * d * |E|) and still draws about |E|
    triples.

    Returns:
        (n_batches, batch_size)
    """
    n_edges = max(1, int(n_edges))
    n_batches = min(math.ceil(n_edges / config.batch_size), config.max_batches_per_epoch)
    n_batches = max(1, n_batches)
    return n_batches, max(config.batch_size, math.ceil(n_edges / n_batches))


def run_epoch(model: Recommender, sampler: BprSampler, adam: AdamState,
              rng: np.random.Generator, n_batches: int,
              batch_size: Optional[int] = None) -> Tuple[float, AdamState]:
    """
    Sample, forward, back-propagate and update n_batches times

    Returns:
        (mean batch loss, updated Adam state)
    """
    batch_size = batch_size or model.config.batch_size
    losses = []
    for _ in range(n_batches):
        batch = sampler.sample(batch_size, rng)
        if len(batch) == 0:
            continue
        trace = model.forward(training=True)
        loss, grads = model.loss_and_grads(trace, batch)
        params, adam = adam_step(model.params(), grads, adam, model.config.lr)
        model.set_params(params)
        losses.append(loss)
    return (float(np.mean(losses)) if losses else float("nan")), adam


def train(splits: DatasetSplits, config: TrainConfig, kind: str = "cpa_lgc",
          streams: Optional[RngStreams] = None, progress: bool = True,
          on_epoch: Optional[Callable[[EpochRecord], None]] = None) -> TrainResult:
    """
    Train one model with early stopping on validation NDCG@10

    Args:
        splits: train/valid/test; only train and valid are used here
        config: Hyperparameters
        kind: Model kind for get_recommender
        streams: Random streams; None derives them from config.seed
        progress: Show a tqdm bar over epochs
        on_epoch: Called with every EpochRecord

    Returns:
        TrainResult whose model holds the best-validation parameters
    """
    streams = streams or RngStreams(config.seed)
    model = get_recommender(kind, splits.train, config, streams)
    sampler = BprSampler(model.sampling_graph, config.negative_mode)
    rng = streams.get("sampler")
    n_batches, batch_size = epoch_batches(model.sampling_graph.n_edges, config)

    try:
        has_valid = True
        initial = _validation_ndcg(model, splits)
    except EvaluationError:
        logger.warning("validation set is empty; early stopping disabled")
        has_valid, initial = False, float("nan")
    result = TrainResult(model=model, initial_val_ndcg=initial)
    logger.info("%s: %d batches/epoch of %d, initial val NDCG@%d %.4f",
                model.label, n_batches, batch_size, VALIDATION_K, initial)

    adam = AdamState.zeros_like(model.params())
    best_params = _snapshot(model.params())
    best = -math.inf
    wait = 0
    epochs = tqdm(range(1, config.max_epochs + 1), desc=model.label, unit="epoch",
                  disable=not progress)
    for epoch in epochs:
        started = time.perf_counter()
        try:
            loss, adam = run_epoch(model, sampler, adam, rng, n_batches, batch_size)
            if not math.isfinite(loss):
                raise NumericError(f"epoch loss is {loss}")
            val = _validation_ndcg(model, splits) if has_valid else float("nan")
        except NumericError as e:
            logger.error("%s diverged in epoch %d: %s; keeping the best parameters",
                         model.label, epoch, e)
            result.diverged = True
            break
        record = EpochRecord(epoch=epoch, loss=loss, val_ndcg10=val,
                             seconds=time.perf_counter() - started)
        result.log.append(record)
        if on_epoch is not None:
            on_epoch(record)
        epochs.set_postfix(loss=f"{loss:.4f}", ndcg=f"{val:.4f}")
        logger.debug("epoch %d: loss %.5f, val NDCG@%d %.5f (%.2fs)",
                     epoch, loss, VALIDATION_K, val, record.seconds)

        if not has_valid or val > best:
            best = val
            result.best_epoch = epoch
            best_params = _snapshot(model.params())
            wait = 0
        else:
            wait += 1
            if wait >= config.patience:
                logger.info("early stop at epoch %d (best %d)", epoch, result.best_epoch)
                break

    model.set_params(best_params)
    result.best_val_ndcg = best if result.best_epoch else float("nan")
    logger.info("%s: best val NDCG@%d %.4f at epoch %d", model.label, VALIDATION_K,
                result.best_val_ndcg, result.best_epoch)
    return result

