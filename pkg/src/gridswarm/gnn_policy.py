"""Graph-attention Q-network.

Entity embedding (node feature + learned type embedding + mean incident
edge weight) followed by stacked multi-head attention layers whose logits
carry a learned linear bias on the scalar edge distance, and a 4-action
Q readout at the observer node. All forward paths accept a batch of padded
graph snapshots.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import ParamStore, Tape, Tensor
from .ego_graph import FEATURE_DIM, NODE_AGENT, NODE_GOAL, EgoGraph

TYPE_EMBED_DIM = 4
N_ACTIONS = 4


@dataclass(frozen=True)
class PolicyConfig:
    feature_dim: int = FEATURE_DIM
    hidden_dim: int = 64
    heads: int = 3
    layers: int = 2
    n_actions: int = N_ACTIONS

    @property
    def key_dim(self) -> int:
        return self.hidden_dim // self.heads

    def validate(self) -> None:
        if self.heads < 1 or self.layers < 1:
            raise ValueError("heads and layers must be >= 1")
        if self.hidden_dim < self.heads:
            raise ValueError("hidden_dim must be >= heads")


@dataclass
class GraphSnapshot:
    """Network-ready view of one ego graph.

    Edge weights are scaled by the grid side so attention biases stay in a
    comparable range to the normalized node features.
    """
    features: np.ndarray     # (V, 12)
    type_onehot: np.ndarray  # (V, 2)
    ebar: np.ndarray         # (V, 1) mean incident edge weight / grid size
    mask: np.ndarray         # (V, V) bool, in-neighbors plus self-loop
    edge_w: np.ndarray       # (V, V) scaled weights, [dst, src] layout
    node_types: np.ndarray   # (V,) int
    node_ids: list[int] = field(default_factory=list)

    @property
    def n_nodes(self) -> int:
        return self.features.shape[0]

    @classmethod
    def from_graph(cls, graph: EgoGraph, grid_size: int) -> "GraphSnapshot":
        types = graph.node_types
        onehot = np.zeros((graph.n_nodes, 2))
        onehot[np.arange(graph.n_nodes), types] = 1.0
        return cls(
            features=graph.features.copy(),
            type_onehot=onehot,
            ebar=(graph.mean_incident_weight() / grid_size)[:, None],
            mask=graph.attention_mask(),
            edge_w=graph.edge_weight_matrix() / grid_size,
            node_types=types.copy(),
            node_ids=list(graph.node_ids),
        )


@dataclass
class AttentionTrace:
    """alpha[layer][head] is a (V, V) array; row i holds node i's weights."""
    alphas: list[list[np.ndarray]]


@dataclass
class QOutput:
    q_values: np.ndarray
    trace: AttentionTrace | None = None


def init_params(cfg: PolicyConfig, seed: int = 0) -> ParamStore:
    cfg.validate()
    rng = np.random.default_rng(seed)
    params = ParamStore()
    d, dk = cfg.hidden_dim, cfg.key_dim
    in_dim = cfg.feature_dim + TYPE_EMBED_DIM + 1
    params.create("type_embed", ad.xavier_uniform(rng, 2, TYPE_EMBED_DIM, (2, TYPE_EMBED_DIM)))
    params.create("embed_W", ad.xavier_uniform(rng, in_dim, d, (in_dim, d)))
    params.create("embed_b", np.zeros(d))
    for l in range(cfg.layers):
        for h in range(cfg.heads):
            params.create(f"l{l}h{h}_WQ", ad.xavier_uniform(rng, d, dk, (d, dk)))
            params.create(f"l{l}h{h}_WK", ad.xavier_uniform(rng, d, dk, (d, dk)))
            params.create(f"l{l}h{h}_Wm", ad.xavier_uniform(rng, d, d, (d, d)))
            params.create(f"l{l}h{h}_we", rng.uniform(-0.5, 0.5, size=()))
    params.create("out_W", ad.xavier_uniform(rng, d, cfg.n_actions, (d, cfg.n_actions)))
    params.create("out_b", np.zeros(cfg.n_actions))
    return params


def pad_batch(snaps: list[GraphSnapshot]):
    """Stack snapshots into padded (B, Vmax, ...) arrays; pad nodes are fully masked."""
    b = len(snaps)
    vm = max(s.n_nodes for s in snaps)
    feats = np.zeros((b, vm, snaps[0].features.shape[1]))
    onehot = np.zeros((b, vm, 2))
    ebar = np.zeros((b, vm, 1))
    mask = np.zeros((b, vm, vm), dtype=bool)
    edge_w = np.zeros((b, vm, vm))
    for i, s in enumerate(snaps):
        v = s.n_nodes
        feats[i, :v] = s.features
        onehot[i, :v] = s.type_onehot
        ebar[i, :v] = s.ebar
        mask[i, :v, :v] = s.mask
        edge_w[i, :v, :v] = s.edge_w
    return feats, onehot, ebar, mask, edge_w


def embed_entities(feats, onehot, ebar, params: ParamStore, tape: Tape | None) -> Tensor:
    """Initial node embeddings from [feature, type embedding, mean edge weight]."""
    f = Tensor(feats, tape=tape)
    oh = Tensor(onehot, tape=tape)
    eb = Tensor(ebar, tape=tape)
    type_vec = ad.matmul(oh, params["type_embed"])
    ext = ad.concat_last([f, type_vec, eb])
    return ad.affine(ext, params["embed_W"], params["embed_b"])


def attention_layer(z: Tensor, mask, edge_w, params: ParamStore, cfg: PolicyConfig,
                    layer: int, collect_alphas: list | None = None) -> Tensor:
    """One message-passing layer: per-head edge-biased attention, summed over heads."""
    scale = 1.0 / np.sqrt(cfg.key_dim)
    out = None
    for h in range(cfg.heads):
        pre = f"l{layer}h{h}"
        q = ad.matmul(z, params[f"{pre}_WQ"])
        k = ad.matmul(z, params[f"{pre}_WK"])
        logits = ad.mul(ad.matmul(q, ad.transpose_last(k)), Tensor(scale))
        bias = ad.mul(params[f"{pre}_we"], Tensor(edge_w, tape=z.tape))
        logits = ad.add(logits, bias)
        alpha = ad.softmax_rows(logits, mask)
        if collect_alphas is not None:
            collect_alphas.append(alpha.data.copy())
        msg = ad.matmul(alpha, ad.matmul(z, params[f"{pre}_Wm"]))
        head_out = ad.relu(msg)
        out = head_out if out is None else ad.add(out, head_out)
    return out


def forward_batch(feats, onehot, ebar, mask, edge_w, params: ParamStore,
                  cfg: PolicyConfig, tape: Tape | None = None,
                  want_trace: bool = False) -> tuple[Tensor, AttentionTrace | None]:
    """Q-values (B, 4) for the observer node (index 0) of every graph in the batch."""
    z = embed_entities(feats, onehot, ebar, params, tape)
    trace_layers: list[list[np.ndarray]] = []
    for l in range(cfg.layers):
        collect: list | None = [] if want_trace else None
        z = attention_layer(z, mask, edge_w, params, cfg, l, collect)
        if want_trace:
            trace_layers.append(collect)
    obs = ad.take_index(z, 0, axis=-2)
    q = ad.affine(obs, params["out_W"], params["out_b"])
    trace = AttentionTrace(trace_layers) if want_trace else None
    return q, trace


def forward(snap: GraphSnapshot, params: ParamStore, cfg: PolicyConfig,
            want_trace: bool = False) -> QOutput:
    """Single-graph forward pass without gradient recording."""
    feats, onehot, ebar, mask, edge_w = pad_batch([snap])
    q, trace = forward_batch(feats, onehot, ebar, mask, edge_w, params, cfg,
                             tape=None, want_trace=want_trace)
    if want_trace:
        trace = AttentionTrace([[a[0] for a in layer] for layer in trace.alphas])
    return QOutput(q_values=q.data[0], trace=trace)


def greedy_action(q: QOutput | np.ndarray) -> int:
    """Argmax over actions; ties go to the lowest action code."""
    values = q.q_values if isinstance(q, QOutput) else q
    return int(np.argmax(values))


def export_attention(trace: AttentionTrace, snap: GraphSnapshot) -> str:
    """Final-layer, head-averaged attention as a CSV: agent rows, goal columns.

    Rows are renormalized over the goal columns so an agent attending a
    single goal reports 1.0.
    """
    avg = np.mean(trace.alphas[-1], axis=0)
    agent_rows = [i for i, t in enumerate(snap.node_types) if t == NODE_AGENT]
    goal_cols = [i for i, t in enumerate(snap.node_types) if t == NODE_GOAL]
    lines = ["," + ",".join(f"goal_{snap.node_ids[j]}" for j in goal_cols)]
    for i in agent_rows:
        row = avg[i, goal_cols]
        total = row.sum()
        if total > 0:
            row = row / total
        cells = ",".join(f"{v:.4f}" for v in row)
        lines.append(f"agent_{snap.node_ids[i]}" + ("," + cells if goal_cols else ""))
    return "\n".join(lines) + "\n"
