"""Per-agent ego-graph construction.

Nodes are all agents plus every discovered, uncollected goal lying within
vision radius of at least one agent. Agent-agent edges follow a k-nearest
rule (directed, out of each agent); agent-goal edges exist in both
directions whenever the pair is within vision radius. Node features are
expressed relative to the observing agent; each node additionally carries
the offsets of its own three nearest discovered goals.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grid_world import EnvState

FEATURE_DIM = 12
NODE_AGENT = 0
NODE_GOAL = 1


@dataclass(frozen=True)
class GraphConfig:
    k: int = 3
    vision_radius: float = 4.5
    include_collected_goals: bool = False

    def validate(self) -> None:
        if self.k < 0:
            raise ValueError("k must be >= 0")
        if self.vision_radius <= 0:
            raise ValueError("vision_radius must be positive")


@dataclass(frozen=True)
class Edge:
    src: int
    dst: int
    weight: float
    kind: str  # "agent-agent" or "agent-goal"


@dataclass
class EgoGraph:
    observer_id: int
    node_types: np.ndarray        # (V,) int, 0=agent 1=goal; node 0 is the observer
    node_positions: np.ndarray    # (V, 2) int cell coordinates
    node_ids: list[int]           # entity id per node (agent id or goal id)
    features: np.ndarray          # (V, 12) float64, already normalized
    edges: list[Edge] = field(default_factory=list)

    @property
    def n_nodes(self) -> int:
        return len(self.node_ids)

    def edge_weight_matrix(self) -> np.ndarray:
        """(V, V) matrix w[dst, src] = edge weight, 0 where no edge."""
        v = self.n_nodes
        w = np.zeros((v, v))
        for e in self.edges:
            w[e.dst, e.src] = e.weight
        return w

    def attention_mask(self) -> np.ndarray:
        """(V, V) boolean, mask[i, j] true when node i may attend to node j.

        In-neighbors under the stored edge direction, plus a self-loop so
        isolated nodes still produce an embedding.
        """
        v = self.n_nodes
        mask = np.zeros((v, v), dtype=bool)
        for e in self.edges:
            mask[e.dst, e.src] = True
        np.fill_diagonal(mask, True)
        return mask

    def mean_incident_weight(self) -> np.ndarray:
        """(V,) mean weight over edges touching each node, 0 when isolated."""
        v = self.n_nodes
        total = np.zeros(v)
        count = np.zeros(v)
        for e in self.edges:
            total[e.src] += e.weight
            count[e.src] += 1
            total[e.dst] += e.weight
            count[e.dst] += 1
        return np.divide(total, count, out=np.zeros(v), where=count > 0)


def _dist(p: tuple[int, int], q: tuple[int, int]) -> float:
    return math.hypot(p[0] - q[0], p[1] - q[1])


def node_features(
    env: EnvState,
    agent_id: int,
    position: tuple[int, int],
    node_type: int,
) -> np.ndarray:
    """Raw (unnormalized) 12-vector for one node.

    Layout: [dx, dy, (gx, gy, s) x 3, type]. dx/dy are relative to the
    observing agent; goal slots hold offsets from this node to its three
    nearest discovered uncollected goals (status 1 when filled, zero padded).
    """
    ox, oy = env.agents[agent_id].position
    f = np.zeros(FEATURE_DIM)
    f[0] = position[0] - ox
    f[1] = position[1] - oy
    candidates = [
        g for g in env.goals if g.discovered and not g.collected and g.position != position
    ]
    candidates.sort(key=lambda g: (_dist(g.position, position), g.id))
    for slot, goal in enumerate(candidates[:3]):
        f[2 + 3 * slot] = goal.position[0] - position[0]
        f[3 + 3 * slot] = goal.position[1] - position[1]
        f[4 + 3 * slot] = 1.0
    f[11] = float(node_type)
    return f


def normalize_features(features: np.ndarray, grid_size: int) -> np.ndarray:
    """Scale position components by the grid side; statuses and type untouched."""
    if grid_size < 2:
        raise ValueError("grid_size must be >= 2")
    out = features.copy()
    pos_cols = [0, 1, 2, 3, 5, 6, 8, 9]
    out[..., pos_cols] = out[..., pos_cols] / grid_size
    return out


def build_ego_graph(env: EnvState, agent_id: int, gcfg: GraphConfig | None = None) -> EgoGraph:
    """Build the observing agent's graph snapshot from the current state."""
    gcfg = gcfg or GraphConfig()
    gcfg.validate()
    if not (0 <= agent_id < len(env.agents)):
        raise ValueError(f"invalid agent id {agent_id}")

    agents = env.agents
    goal_pool = [
        g
        for g in env.goals
        if g.discovered and (gcfg.include_collected_goals or not g.collected)
    ]
    # Goal nodes: within vision radius of at least one agent.
    goal_nodes = [
        g
        for g in goal_pool
        if any(_dist(g.position, a.position) <= gcfg.vision_radius for a in agents)
    ]

    order = [agents[agent_id]] + [a for a in agents if a.id != agent_id] + goal_nodes
    node_ids = [e.id for e in order]
    node_types = np.array(
        [NODE_AGENT] * len(agents) + [NODE_GOAL] * len(goal_nodes), dtype=int
    )
    positions = np.array([e.position for e in order], dtype=int)

    agent_index = {a.id: i for i, a in enumerate(order[: len(agents)])}
    edges: list[Edge] = []
    for a in agents:
        others = sorted(
            (other for other in agents if other.id != a.id),
            key=lambda o: (_dist(a.position, o.position), o.id),
        )
        for nb in others[: gcfg.k]:
            edges.append(
                Edge(agent_index[a.id], agent_index[nb.id], _dist(a.position, nb.position),
                     "agent-agent")
            )
    for gi, g in enumerate(goal_nodes):
        g_idx = len(agents) + gi
        for a in agents:
            d = _dist(a.position, g.position)
            if d <= gcfg.vision_radius:
                edges.append(Edge(agent_index[a.id], g_idx, d, "agent-goal"))
                edges.append(Edge(g_idx, agent_index[a.id], d, "agent-goal"))

    raw = np.stack(
        [node_features(env, agent_id, tuple(positions[i]), int(node_types[i]))
         for i in range(len(order))]
    )
    features = normalize_features(raw, env.config.grid_size)
    return EgoGraph(
        observer_id=agent_id,
        node_types=node_types,
        node_positions=positions,
        node_ids=node_ids,
        features=features,
        edges=edges,
    )


def dump_graph(graph: EgoGraph) -> str:
    """Text dump: `node <idx> <type> <x> <y>` and `edge <src> <dst> <weight>` lines."""
    lines = []
    for i in range(graph.n_nodes):
        t = "agent" if graph.node_types[i] == NODE_AGENT else "goal"
        x, y = graph.node_positions[i]
        lines.append(f"node {i} {t} {x} {y}")
    for e in graph.edges:
        lines.append(f"edge {e.src} {e.dst} {e.weight:.6f}")
    return "\n".join(lines) + "\n"
