"""
Recommender Strategies

Every trainable model exposes the same surface to the training loop:
- params / set_params: trainable tables by name
- forward: one full propagation (a trace the model understands)
- loss_and_grads: BPR loss and gradients for a sampled batch
- ranking_embeddings: user and criterion-0 item vectors for evaluation

CPA-LGC and its ablations live here; the LightGCN baselines are in
baselines.py and plug into the same interface.
"""

import logging
from abc import ABC, abstractmethod
from typing import Dict, Optional, Tuple

import numpy as np

from src.config import TrainConfig
from src.core import model as cpa
from src.core.dataset import InteractionSet, restrict_criteria
from src.core.errors import CheckpointError, NumericError
from src.core.graph import McExpansionGraph, NodeLayout, build_graph, normalize
from src.core.seeding import RngStreams
from src.services.bpr import BprBatch, bpr_loss, bpr_margin_grad

logger = logging.getLogger(__name__)

VARIANT_LABELS = {
    "full": "CPA-LGC",
    "mc_only": "CPA-LGC-MC",
    "no_cp": "CPA-LGC-c",
    "no_f": "CPA-LGC-f",
    "reduced": "CPA-LGC-MC-c-f",
}

Params = Dict[str, np.ndarray]


class Recommender(ABC):
    """Abstract base class for trainable recommenders"""

    kind = ""

    def __init__(self, config: TrainConfig):
        self.config = config

    @property
    @abstractmethod
    def label(self) -> str:
        """Display name used in logs and result tables"""

    @property
    @abstractmethod
    def sampling_graph(self) -> McExpansionGraph:
        """Graph whose edges are the BPR positives"""

    @abstractmethod
    def params(self) -> Params:
        """Current trainable tables by name"""

    @abstractmethod
    def set_params(self, params: Params) -> None:
        pass

    @abstractmethod
    def forward(self, training: bool = False):
        """One full propagation; the returned trace feeds loss_and_grads"""

    @abstractmethod
    def loss_and_grads(self, trace, batch: BprBatch) -> Tuple[float, Params]:
        """
        BPR loss of a batch and its gradient for every trainable table

        Args:
            trace: Result of forward(training=True)
            batch: Sampled triples

        Returns:
            (loss, gradients keyed like params())
        """

    @abstractmethod
    def ranking_embeddings(self, trace) -> Tuple[np.ndarray, np.ndarray]:
        """(n_users x D user vectors, n_items x D criterion-0 item vectors)"""

    def checkpoint_tables(self) -> Params:
        return {name: value.copy() for name, value in self.params().items()}

    def load_tables(self, tables: Params) -> None:
        current = self.params()
        missing = set(current) - set(tables)
        if missing:
            raise CheckpointError(f"checkpoint lacks tables {sorted(missing)}")
        for name, value in current.items():
            if tables[name].shape != value.shape:
                raise CheckpointError(
                    f"table {name} has shape {tables[name].shape}, model expects {value.shape}"
                )
        self.set_params({name: np.asarray(tables[name], dtype=np.float64) for name in current})

    def header(self) -> Dict:
        """Checkpoint header describing how to rebuild this model"""
        return {
            "kind": self.kind,
            "label": self.label,
            "variant": self.config.variant,
            "layout": self.sampling_graph.layout.to_dict(),
            "config": self.config.to_dict(),
        }

    def parameter_count(self) -> int:
        return int(sum(value.size for value in self.params().values()))


def _batch_scores(H_users: np.ndarray, H_pos: np.ndarray,
                  H_neg: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    return np.sum(H_users * H_pos, axis=1), np.sum(H_users * H_neg, axis=1)


def check_finite_loss(loss: float) -> float:
    if not np.isfinite(loss):
        raise NumericError(f"BPR loss is not finite ({loss})")
    return loss


class CpaLgcRecommender(Recommender):
    """
    CPA-LGC and its ablations

    Variants:
    - full: E and P stacks on the complete expansion graph
    - mc_only: criterion-0 edges only
    - no_cp: no preference stack
    - no_f: PairNorm replaced by identity
    - reduced: all three ablations at once, which is LightGCN with
      alpha-weighted edges (normalization cancels the weight)
    """

    kind = "cpa_lgc"

    def __init__(self, train: InteractionSet, config: TrainConfig,
                 streams: Optional[RngStreams] = None):
        super().__init__(config)
        streams = streams or RngStreams(config.seed)
        self.graph = build_graph(self._graph_data(train), self._alpha(),
                                 config.use_rating_weights)
        self.adj = normalize(self.graph)
        self.state = cpa.init_state(self.graph.layout, config.dim, streams,
                                    with_preferences=self._with_preferences())
        logger.info("%s: %d nodes, %d edges, %d parameters", self.label,
                    self.graph.node_count, self.graph.n_edges, self.parameter_count())

    def _graph_data(self, train: InteractionSet) -> InteractionSet:
        if self.config.variant in ("mc_only", "reduced"):
            return restrict_criteria(train, 1)
        return train

    def _alpha(self) -> float:
        return self.config.alpha

    def _with_preferences(self) -> bool:
        return self.config.variant not in ("no_cp", "reduced")

    @property
    def pairnorm_enabled(self) -> bool:
        return self.config.uses_pairnorm

    @property
    def label(self) -> str:
        return VARIANT_LABELS[self.config.variant]

    @property
    def layout(self) -> NodeLayout:
        return self.graph.layout

    @property
    def sampling_graph(self) -> McExpansionGraph:
        return self.graph

    def params(self) -> Params:
        params = {"E0": self.state.E0}
        if self.state.has_preferences:
            params["P0_user"] = self.state.P0_user
        return params

    def set_params(self, params: Params) -> None:
        self.state.E0 = params["E0"]
        if self.state.has_preferences:
            self.state.P0_user = params["P0_user"]

    def checkpoint_tables(self) -> Params:
        tables = super().checkpoint_tables()
        if self.state.has_preferences:
            tables["P0_proto"] = self.state.P0_proto.copy()
        return tables

    def load_tables(self, tables: Params) -> None:
        super().load_tables(tables)
        if self.state.has_preferences:
            if "P0_proto" not in tables or tables["P0_proto"].shape != self.state.P0_proto.shape:
                raise CheckpointError("checkpoint prototypes are missing or mis-shaped")
            self.state.P0_proto = np.asarray(tables["P0_proto"], dtype=np.float64)

    def forward(self, training: bool = False,
                stop_gradient_ref: Optional[cpa.ForwardTrace] = None) -> cpa.ForwardTrace:
        cfg = self.config
        return cpa.forward(
            self.adj, self.state, cfg.layers, s=cfg.scale,
            pairnorm_enabled=self.pairnorm_enabled, pairnorm_layer0=cfg.pairnorm_layer0,
            training=training, threads=cfg.threads, stop_gradient_ref=stop_gradient_ref,
        )

    def _regularized_rows(self, batch: BprBatch) -> Tuple[np.ndarray, np.ndarray]:
        nodes = np.unique(np.concatenate([batch.users, batch.pos, batch.neg]))
        return nodes, np.unique(batch.users)

    def batch_loss(self, trace: cpa.ForwardTrace, batch: BprBatch) -> float:
        """Loss only; used for finite-difference checks"""
        H = trace.final_embeddings()
        sp_, sn_ = _batch_scores(H[batch.users], H[batch.pos], H[batch.neg])
        nodes, users = self._regularized_rows(batch)
        reg = float(np.sum(self.state.E0[nodes] ** 2))
        if self.state.has_preferences:
            reg += float(np.sum(self.state.P0_user[users] ** 2))
        return bpr_loss(sp_, sn_, reg, self.config.reg_lambda)

    def loss_and_grads(self, trace: cpa.ForwardTrace, batch: BprBatch) -> Tuple[float, Params]:
        lam = self.config.reg_lambda
        H = trace.final_embeddings()
        h_u, h_p, h_n = H[batch.users], H[batch.pos], H[batch.neg]
        sp_, sn_ = _batch_scores(h_u, h_p, h_n)
        nodes, users = self._regularized_rows(batch)
        reg = float(np.sum(self.state.E0[nodes] ** 2))
        if self.state.has_preferences:
            reg += float(np.sum(self.state.P0_user[users] ** 2))
        loss = check_finite_loss(bpr_loss(sp_, sn_, reg, lam))

        g = bpr_margin_grad(sp_, sn_)[:, None]
        G = np.zeros_like(H)
        np.add.at(G, batch.users, g * (h_p - h_n))
        np.add.at(G, batch.pos, g * h_u)
        np.add.at(G, batch.neg, -g * h_u)

        grad_p = G if self.state.has_preferences else None
        grad_E0, grad_P0 = cpa.backward(self.adj, trace, G, grad_p, threads=self.config.threads)
        grad_E0[nodes] += 2.0 * lam * self.state.E0[nodes]
        grads = {"E0": grad_E0}
        if self.state.has_preferences:
            grad_P0[users] += 2.0 * lam * self.state.P0_user[users]
            grads["P0_user"] = grad_P0
        return loss, grads

    def ranking_embeddings(self, trace: cpa.ForwardTrace) -> Tuple[np.ndarray, np.ndarray]:
        H = trace.final_embeddings()
        return H[:self.layout.n_users], H[self.layout.item_block(0)]
