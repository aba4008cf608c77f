"""The learnable association model.

Node and edge encoders followed by time-aware message passing: every step
refreshes each edge embedding from its endpoints, then every node sums one
aggregate message from edges arriving out of its past and one from edges
leaving toward its future (separate MLPs for the two directions).  A
sigmoid MLP head turns final edge embeddings into association
probabilities, and two linear projection heads map node/edge embeddings
into the text-embedding space for the distillation losses.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, concat_cols, concat_rows, gather_rows, segment_sum
from .graph import EDGE_FEATURE_DIM, TrackGraph
from .nn import MLPParams, init_mlp, mlp_forward
from .ops import PROB_EPS

__all__ = [
    "ModelConfig",
    "ModelParams",
    "EncodedGraph",
    "init_model",
    "encode_graph",
    "message_pass",
    "classify_edges",
    "project_nodes_for_isg",
    "project_edges_for_spg",
]


@dataclass
class ModelConfig:
    """Architecture hyperparameters.

    ``node_dim`` matches the full-size model by default; tests and the
    desk-scale experiments shrink it via configuration.
    """

    message_passing_steps: int = 8
    edge_dim: int = 16
    text_dim: int = 512
    node_dim: int = 2048
    appearance_dim: int = 32

    def __post_init__(self):
        for name in ("message_passing_steps", "edge_dim", "text_dim", "node_dim", "appearance_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    def to_dict(self) -> dict:
        return {
            "message_passing_steps": self.message_passing_steps,
            "edge_dim": self.edge_dim,
            "text_dim": self.text_dim,
            "node_dim": self.node_dim,
            "appearance_dim": self.appearance_dim,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


def _architecture(config: ModelConfig) -> dict[str, tuple[list[int], list[str]]]:
    """Layer widths and activations for every trainable block."""
    m, e, t, a = config.node_dim, config.edge_dim, config.text_dim, config.appearance_dim
    half = max(m // 2, 1)
    return {
        "node_encoder": ([a, m, m], ["relu", "identity"]),
        "edge_encoder": ([EDGE_FEATURE_DIM, e, e], ["relu", "identity"]),
        "edge_update": ([2 * m + e, e, e], ["relu", "identity"]),
        "node_update_past": ([m + e, half, m], ["relu", "identity"]),
        "node_update_future": ([m + e, half, m], ["relu", "identity"]),
        "edge_classifier": ([e, e, 1], ["relu", "sigmoid"]),
        "isg_projection": ([m, t], ["identity"]),
        "spg_projection": ([e, t], ["identity"]),
    }


@dataclass
class ModelParams:
    """All trainable blocks; field order fixes parameter iteration order."""

    node_encoder: MLPParams
    edge_encoder: MLPParams
    edge_update: MLPParams
    node_update_past: MLPParams
    node_update_future: MLPParams
    edge_classifier: MLPParams
    isg_projection: MLPParams
    spg_projection: MLPParams
    config: ModelConfig

    _FIELDS = (
        "node_encoder",
        "edge_encoder",
        "edge_update",
        "node_update_past",
        "node_update_future",
        "edge_classifier",
        "isg_projection",
        "spg_projection",
    )

    def named_tensors(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for name in self._FIELDS:
            out.update(getattr(self, name).named_tensors(f"{name}."))
        return out

    def zero_grad(self) -> None:
        for t in self.named_tensors().values():
            t.zero_grad()


def init_model(rng: np.random.Generator, config: ModelConfig) -> ModelParams:
    """Seeded initialization; block order is fixed so results reproduce."""
    arch = _architecture(config)
    blocks = {name: init_mlp(rng, dims, acts) for name, (dims, acts) in arch.items()}
    return ModelParams(config=config, **blocks)


def params_from_tensors(tensors: dict[str, Tensor], config: ModelConfig) -> ModelParams:
    """Reassemble ModelParams from checkpointed named tensors."""
    arch = _architecture(config)
    scratch = init_model(np.random.default_rng(0), config)
    for name, t in scratch.named_tensors().items():
        if name not in tensors:
            raise ValueError(f"checkpoint missing tensor {name!r}")
        if tensors[name].data.shape != t.data.shape:
            raise ValueError(
                f"tensor {name!r} has shape {tensors[name].data.shape}, "
                f"expected {t.data.shape}"
            )
    blocks = {}
    for block_name in ModelParams._FIELDS:
        layers = getattr(scratch, block_name).layers
        for i, layer in enumerate(layers):
            layer.w = tensors[f"{block_name}.{i}.w"]
            layer.b = tensors[f"{block_name}.{i}.b"]
        blocks[block_name] = MLPParams(layers)
    return ModelParams(config=config, **blocks)


@dataclass(eq=False)
class EncodedGraph:
    """A graph plus its tensors on the tape.

    ``node_phi``/``edge_init`` are the encoder outputs; ``node_h``/``edge_h``
    appear after message passing (``edge_h`` is the classified embedding).
    """

    graph: TrackGraph
    node_phi: Tensor
    edge_init: Tensor
    node_h: Tensor | None = None
    edge_h: Tensor | None = None


def encode_graph(
    graph: TrackGraph, params: ModelParams, node_init: Tensor | None = None
) -> EncodedGraph:
    """Produce initial node embeddings and edge embeddings.

    Node rows come from, in order of precedence: the supplied ``node_init``
    tensor (training keeps embeddings on the tape across levels), a
    tracklet's stored ``node_embedding``, or the node encoder applied to a
    single detection's appearance vector.
    """
    m = params.config.node_dim
    v = graph.num_nodes
    if node_init is not None:
        if node_init.shape != (v, m):
            raise ValueError(f"node_init shape {node_init.shape}, expected {(v, m)}")
        phi = node_init
    else:
        stored_rows: list[np.ndarray] = []
        encode_rows: list[np.ndarray] = []
        order: list[tuple[int, int]] = []  # (source list, index within it)
        for t in graph.nodes:
            if t.node_embedding is not None:
                emb = np.asarray(t.node_embedding, dtype=np.float64)
                if emb.shape != (m,):
                    raise ValueError(f"stored embedding has dim {emb.shape}, expected ({m},)")
                order.append((0, len(stored_rows)))
                stored_rows.append(emb)
            elif len(t.detections) == 1:
                app = t.first.appearance
                if app.shape != (params.config.appearance_dim,):
                    raise ValueError(
                        f"appearance dim {app.shape[0]} does not match encoder input "
                        f"{params.config.appearance_dim}"
                    )
                order.append((1, len(encode_rows)))
                encode_rows.append(app)
            else:
                raise ValueError(
                    "multi-detection tracklet without a stored embedding cannot be encoded"
                )
        if not encode_rows:
            phi = Tensor(np.stack(stored_rows) if stored_rows else np.zeros((0, m)))
        else:
            encoded = mlp_forward(params.node_encoder, Tensor(np.stack(encode_rows)))
            if not stored_rows:
                phi = encoded
            else:
                stored = Tensor(np.stack(stored_rows))
                offsets = {0: 0, 1: len(stored_rows)}
                perm = [offsets[src] + idx for src, idx in order]
                phi = gather_rows(concat_rows([stored, encoded]), perm)
    if graph.num_edges:
        edge_init = mlp_forward(params.edge_encoder, Tensor(graph.edge_features))
    else:
        edge_init = Tensor(np.zeros((0, params.config.edge_dim)))
    return EncodedGraph(graph, phi, edge_init)


def message_pass(eg: EncodedGraph, params: ModelParams, steps: int) -> EncodedGraph:
    """Run `steps` rounds of edge-then-node updates.

    Nodes with no incident edge keep their embedding.  Returns a new
    EncodedGraph; the input is left untouched.
    """
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    g = eg.graph
    h, e = eg.node_phi, eg.edge_init
    if g.num_edges == 0:
        return EncodedGraph(g, eg.node_phi, eg.edge_init, node_h=h, edge_h=e)
    u_idx = g.edge_u.tolist()
    v_idx = g.edge_v.tolist()
    touched = np.zeros((g.num_nodes, 1))
    touched[g.edge_u] = 1.0
    touched[g.edge_v] = 1.0
    keep = Tensor(1.0 - touched)
    touched_t = Tensor(touched)
    for _ in range(steps):
        hu = gather_rows(h, u_idx)
        hv = gather_rows(h, v_idx)
        e = mlp_forward(params.edge_update, concat_cols([hu, hv, e]))
        past_msg = mlp_forward(params.node_update_past, concat_cols([hu, e]))
        future_msg = mlp_forward(params.node_update_future, concat_cols([hv, e]))
        agg = segment_sum(past_msg, v_idx, g.num_nodes) + segment_sum(
            future_msg, u_idx, g.num_nodes
        )
        h = touched_t * agg + keep * h
    return EncodedGraph(g, eg.node_phi, eg.edge_init, node_h=h, edge_h=e)


def classify_edges(eg: EncodedGraph, params: ModelParams) -> Tensor:
    """Association probability per edge, clamped strictly inside (0, 1)."""
    if eg.edge_h is None:
        raise RuntimeError("classify_edges requires message passing to have run")
    if eg.graph.num_edges == 0:
        return Tensor(np.zeros((0, 1)))
    probs = mlp_forward(params.edge_classifier, eg.edge_h)
    return probs.clamp(PROB_EPS, 1.0 - PROB_EPS)


def project_nodes_for_isg(
    eg: EncodedGraph, params: ModelParams, use_updated: bool = False
) -> Tensor:
    """Project node embeddings into text space (one row per node).

    By default the pre-message-passing embeddings are projected; pass
    ``use_updated=True`` to project the refined embeddings instead.
    """
    if use_updated:
        if eg.node_h is None:
            raise RuntimeError("use_updated requires message passing to have run")
        src = eg.node_h
    else:
        src = eg.node_phi
    return mlp_forward(params.isg_projection, src)


def project_edges_for_spg(eg: EncodedGraph, params: ModelParams) -> Tensor:
    """Project final edge embeddings into text space (one row per edge)."""
    if eg.edge_h is None:
        raise RuntimeError("project_edges_for_spg requires message passing to have run")
    if eg.graph.num_edges == 0:
        return Tensor(np.zeros((0, params.config.text_dim)))
    return mlp_forward(params.spg_projection, eg.edge_h)
