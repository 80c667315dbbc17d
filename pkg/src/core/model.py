"""
CPA-LGC Forward Computation

Two light graph convolution stacks run over the same normalized adjacency:
- E: ID embeddings of users and criterion-item nodes (trainable)
- P: user criteria-preference (UCP) embeddings plus one fixed prototype
  per criterion shared by all of that criterion's item nodes

Each layer output passes through PairNorm f (or identity), layers are
averaged uniformly, and a user/item score is the dot product of E + P.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.core.errors import CheckpointError, ConfigError, DegenerateInputError, NumericError
from src.core.graph import NodeLayout, NormalizedAdjacency, propagate
from src.core.seeding import RngStreams

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = "MCREC-CKPT-v1"

Table = np.ndarray


@dataclass(eq=False)
class EmbeddingState:
    """Initial (layer-0) embedding tables of one CPA-LGC model"""

    layout: NodeLayout
    E0: Table
    P0_user: Optional[Table] = None
    P0_proto: Optional[Table] = None

    @property
    def dim(self) -> int:
        return self.E0.shape[1]

    @property
    def has_preferences(self) -> bool:
        return self.P0_user is not None

    def initial_preferences(self) -> Table:
        """|V| x d layer-0 P table; item node (i, c) gets prototype c"""
        if not self.has_preferences:
            raise ConfigError("this state carries no preference tables")
        blocks = np.repeat(self.P0_proto, self.layout.n_items, axis=0)
        return np.vstack([self.P0_user, blocks])

    def copy(self) -> "EmbeddingState":
        return EmbeddingState(
            layout=self.layout,
            E0=self.E0.copy(),
            P0_user=None if self.P0_user is None else self.P0_user.copy(),
            P0_proto=None if self.P0_proto is None else self.P0_proto.copy(),
        )


@dataclass(eq=False)
class ForwardTrace:
    """Every intermediate table of one forward pass, kept for backward"""

    layout: NodeLayout
    layers: int
    scale: float
    pairnorm_enabled: bool
    pairnorm_layer0: bool
    training: bool
    e_layers: List[Table]
    e_dot: List[Table]
    p_layers: Optional[List[Table]] = None
    p_dot: Optional[List[Table]] = None
    e_star: Optional[Table] = None
    e_star_dot: Optional[Table] = None
    p_star: Optional[Table] = None
    p_star_dot: Optional[Table] = None
    extras: Dict[str, object] = field(default_factory=dict)

    @property
    def has_preferences(self) -> bool:
        return self.p_dot is not None

    @property
    def complete(self) -> bool:
        return self.e_star_dot is not None

    def final_embeddings(self) -> Table:
        """Ė* + Ṗ* (Ė* alone when the P stack is absent)"""
        if not self.complete:
            raise ConfigError("trace has not been combined yet")
        if self.p_star_dot is None:
            return self.e_star_dot
        return self.e_star_dot + self.p_star_dot


def xavier_uniform(rng: np.random.Generator, rows: int, dim: int) -> Table:
    """Xavier-uniform table with fan_in = fan_out = dim"""
    bound = np.sqrt(6.0 / (dim + dim))
    return rng.uniform(-bound, bound, size=(rows, dim))


def init_state(layout: NodeLayout, dim: int, streams: RngStreams,
               with_preferences: bool = True) -> EmbeddingState:
    """
    Draw initial embedding tables

    Args:
        layout: Node index space
        dim: Embedding dimension d
        streams: Random streams; E0 then P0_user come from "init",
            prototypes from "prototypes"
        with_preferences: False builds an E-only state (no_cp, LightGCN)

    Returns:
        Fresh EmbeddingState
    """
    rng = streams.get("init")
    E0 = xavier_uniform(rng, layout.node_count, dim)
    if not with_preferences:
        return EmbeddingState(layout=layout, E0=E0)
    P0_user = xavier_uniform(rng, layout.n_users, dim)
    P0_proto = xavier_uniform(streams.get("prototypes"), layout.n_criteria_plus1, dim)
    return EmbeddingState(layout=layout, E0=E0, P0_user=P0_user, P0_proto=P0_proto)


def _is_degenerate(X: Table, centered_norm: float) -> bool:
    return centered_norm <= 1e-12 * (np.linalg.norm(X) + 1e-300)


def pairnorm(X: Table, s: float = 1.0, training: bool = False) -> Table:
    """
    Center rows, then rescale so the mean squared row norm is s^2

    Args:
        X: n x d table
        s: Scale
        training: Degenerate input passes through with a warning instead
            of raising

    Returns:
        s * sqrt(n) * (X - mean(X)) / ||X - mean(X)||_F
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise DegenerateInputError(f"PairNorm needs a non-empty 2-D table, got shape {X.shape}")
    M = X - X.mean(axis=0, keepdims=True)
    norm = np.linalg.norm(M)
    if _is_degenerate(X, norm):
        if training:
            logger.warning("PairNorm input has identical rows; passing it through")
            return X.copy()
        raise DegenerateInputError("PairNorm input has identical rows (zero centered norm)")
    return (s * np.sqrt(X.shape[0]) / norm) * M


def pairnorm_backward(X: Table, G: Table, s: float = 1.0) -> Table:
    """Vector-Jacobian product of pairnorm at X with upstream gradient G"""
    M = X - X.mean(axis=0, keepdims=True)
    norm = np.linalg.norm(M)
    if _is_degenerate(X, norm):
        return G.copy()
    k = s * np.sqrt(X.shape[0])
    dM = (k / norm) * (G - (np.sum(G * M) / norm ** 2) * M)
    return dM - dM.mean(axis=0, keepdims=True)


def _check_finite(X: Table, layer: int, label: str) -> Table:
    if not np.isfinite(X).all():
        raise NumericError(f"non-finite values in {label}", layer=layer)
    return X


def _freeze_items(X: Table, ref: Table, n_users: int) -> Table:
    out = X.copy()
    out[n_users:] = ref[n_users:]
    return out


def _make_f(enabled: bool, s: float, training: bool) -> Callable[[Table], Table]:
    if enabled:
        return lambda X: pairnorm(X, s, training)
    return lambda X: X


def _run_stack(adj: NormalizedAdjacency, X0: Table, layers: int, f, f0, threads: int,
               label: str, ref_layers: Optional[List[Table]] = None,
               ref_dot: Optional[List[Table]] = None) -> Tuple[List[Table], List[Table]]:
    n_users = adj.layout.n_users
    raw = [X0]
    first = f0(X0)
    if ref_dot is not None:
        first = _freeze_items(first, ref_dot[0], n_users)
    dot = [_check_finite(first, 0, label)]
    for layer in range(1, layers + 1):
        X = propagate(adj, dot[-1], threads)
        if ref_layers is not None:
            X = _freeze_items(X, ref_layers[layer], n_users)
        raw.append(_check_finite(X, layer, label))
        Y = f(X)
        if ref_dot is not None:
            Y = _freeze_items(Y, ref_dot[layer], n_users)
        dot.append(_check_finite(Y, layer, label))
    return raw, dot


def forward(adj: NormalizedAdjacency, state: EmbeddingState, layers: int, s: float = 1.0,
            pairnorm_enabled: bool = True, pairnorm_layer0: bool = True,
            training: bool = False, threads: int = 1,
            stop_gradient_ref: Optional[ForwardTrace] = None) -> ForwardTrace:
    """
    Run both LGC stacks and combine their layers

    Args:
        adj: Normalized adjacency of the expansion graph
        state: Layer-0 tables
        layers: L >= 1
        s: PairNorm scale
        pairnorm_enabled: f = PairNorm, else identity
        pairnorm_layer0: Apply f to the layer-0 tables too
        training: Degenerate PairNorm input passes through
        threads: Propagation row partitions
        stop_gradient_ref: Replay every item-node P row from this trace,
            which makes the P stack depend on P0_user only through layer 0

    Returns:
        Combined ForwardTrace
    """
    if layers < 1:
        raise ConfigError(f"layers must be >= 1, got {layers}")
    f = _make_f(pairnorm_enabled, s, training)
    f0 = f if pairnorm_layer0 else _make_f(False, s, training)

    e_layers, e_dot = _run_stack(adj, state.E0, layers, f, f0, threads, "E stack")
    trace = ForwardTrace(
        layout=state.layout,
        layers=layers,
        scale=s,
        pairnorm_enabled=pairnorm_enabled,
        pairnorm_layer0=pairnorm_layer0,
        training=training,
        e_layers=e_layers,
        e_dot=e_dot,
    )
    if state.has_preferences:
        ref = stop_gradient_ref
        trace.p_layers, trace.p_dot = _run_stack(
            adj, state.initial_preferences(), layers, f, f0, threads, "P stack",
            ref_layers=None if ref is None else ref.p_layers,
            ref_dot=None if ref is None else ref.p_dot,
        )
    combine(trace, stop_gradient_ref)
    return trace


def _layer_mean(tables: Sequence[Table]) -> Table:
    total = tables[0].copy()
    for table in tables[1:]:
        total += table
    return total / len(tables)


def combine(trace: ForwardTrace,
            stop_gradient_ref: Optional[ForwardTrace] = None) -> Tuple[Table, Optional[Table]]:
    """
    Uniform mean over layers 0..L followed by f

    Args:
        trace: Trace holding per-layer tables
        stop_gradient_ref: See forward

    Returns:
        (Ė*, Ṗ*); Ṗ* is None without the P stack
    """
    f = _make_f(trace.pairnorm_enabled, trace.scale, trace.training)
    trace.e_star = _layer_mean(trace.e_dot)
    trace.e_star_dot = _check_finite(f(trace.e_star), trace.layers, "combined E")
    if trace.has_preferences:
        n_users = trace.layout.n_users
        p_star = _layer_mean(trace.p_dot)
        if stop_gradient_ref is not None:
            p_star = _freeze_items(p_star, stop_gradient_ref.p_star, n_users)
        p_star_dot = f(p_star)
        if stop_gradient_ref is not None:
            p_star_dot = _freeze_items(p_star_dot, stop_gradient_ref.p_star_dot, n_users)
        trace.p_star = p_star
        trace.p_star_dot = _check_finite(p_star_dot, trace.layers, "combined P")
    return trace.e_star_dot, trace.p_star_dot


def backward(adj: NormalizedAdjacency, trace: ForwardTrace, grad_e: Table,
             grad_p: Optional[Table] = None, threads: int = 1) -> Tuple[Table, Optional[Table]]:
    """
    Back-propagate gradients on (Ė*, Ṗ*) to the trainable layer-0 tables

    Item-node P rows are stop-gradient, so only the user rows of Ṗ*
    carry gradient and it reaches P0_user through the layer-0 term alone.

    Args:
        adj: Adjacency used in the forward pass
        trace: Combined forward trace
        grad_e: dLoss/dĖ*, |V| x d
        grad_p: dLoss/dṖ*, |V| x d (item rows are ignored)
        threads: Propagation row partitions

    Returns:
        (dLoss/dE0, dLoss/dP0_user)
    """
    L = trace.layers
    n_users = trace.layout.n_users

    def fb(X: Table, G: Table) -> Table:
        return pairnorm_backward(X, G, trace.scale) if trace.pairnorm_enabled else G

    def fb0(X: Table, G: Table) -> Table:
        return fb(X, G) if trace.pairnorm_layer0 else G

    d_star = fb(trace.e_star, grad_e) / (L + 1)
    d_dot = d_star.copy()
    for layer in range(L, 0, -1):
        d_raw = fb(trace.e_layers[layer], d_dot)
        d_dot = d_star + propagate(adj, d_raw, threads)
    grad_E0 = _check_finite(fb0(trace.e_layers[0], d_dot), 0, "E0 gradient")

    grad_P0_user = None
    if trace.has_preferences and grad_p is not None:
        g = grad_p.copy()
        g[n_users:] = 0.0
        dp_star = fb(trace.p_star, g)
        dp_star[n_users:] = 0.0
        dp0 = fb0(trace.p_layers[0], dp_star / (L + 1))
        grad_P0_user = _check_finite(dp0[:n_users], 0, "P0_user gradient")
    return grad_E0, grad_P0_user


def _final_vectors(E_star: Table, P_star: Optional[Table]) -> Table:
    return E_star if P_star is None else E_star + P_star


def predict(E_star: Table, P_star: Optional[Table], layout: NodeLayout,
            u: int, i: int, c: int = 0) -> float:
    """Score (Ė*[u] + Ṗ*[u]) . (Ė*[i^c] + Ṗ*[i^c])"""
    h_user = E_star[u] if P_star is None else E_star[u] + P_star[u]
    node = layout.item_node(i, c)
    h_item = E_star[node] if P_star is None else E_star[node] + P_star[node]
    return float(h_user @ h_item)


def score_all_items(E_star: Table, P_star: Optional[Table], layout: NodeLayout, u: int) -> np.ndarray:
    """Criterion-0 scores of user u against every item"""
    return score_users(E_star, P_star, layout, np.array([u]))[0]


def score_users(E_star: Table, P_star: Optional[Table], layout: NodeLayout,
                users: np.ndarray) -> np.ndarray:
    """len(users) x n_items criterion-0 score matrix"""
    H = _final_vectors(E_star, P_star)
    return H[np.asarray(users)] @ H[layout.item_block(0)].T


def save_checkpoint(path: Union[str, Path], tables: Dict[str, Table], header: Dict) -> Path:
    """
    Write named tables and a JSON header to a versioned .npz file

    Args:
        path: Target file
        tables: Arrays to store (E0, P0_user, ...)
        header: Layout, kind, variant and config echo

    Returns:
        Path written
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {f"table_{name}": np.asarray(value) for name, value in tables.items()}
    with open(path, "wb") as f:
        np.savez(f, magic=np.array(CHECKPOINT_MAGIC),
                 header=np.array(json.dumps(header, sort_keys=True)), **payload)
    return path


def load_checkpoint(path: Union[str, Path]) -> Tuple[Dict, Dict[str, Table]]:
    """Read a checkpoint written by save_checkpoint -> (header, tables)"""
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        with np.load(path, allow_pickle=False) as data:
            magic = str(data["magic"][()])
            if magic != CHECKPOINT_MAGIC:
                raise CheckpointError(f"{path}: unexpected magic '{magic}'")
            header = json.loads(str(data["header"][()]))
            tables = {key[len("table_"):]: data[key].copy()
                      for key in data.files if key.startswith("table_")}
    except (OSError, ValueError, KeyError) as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    return header, tables
