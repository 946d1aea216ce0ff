"""Scripted comparison policies: random walk, greedy search with a
boustrophedon fallback, PSO goal assignment, and DBSCAN cluster assignment.

All baselines see only the discovered goal set (the same partial
observability the learned policies get) unless `omniscient` is set.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grid_world import ACTION_DELTAS, Action, EnvState

N_ACTIONS = 4

PSO_INERTIA = 0.7
PSO_COGNITIVE = 1.5
PSO_SOCIAL = 1.5
PSO_PARTICLES = 30
PSO_ITERATIONS = 50

DBSCAN_EPS = 5.0
DBSCAN_MIN_PTS = 2


def _targets(env: EnvState, omniscient: bool) -> list:
    return [
        g for g in env.goals
        if not g.collected and (omniscient or g.discovered)
    ]


def _dist(p, q) -> float:
    return math.hypot(p[0] - q[0], p[1] - q[1])


def serpentine_order(grid_size: int) -> list[tuple[int, int]]:
    """Row-by-row sweep: even rows left to right, odd rows right to left."""
    order = []
    for y in range(grid_size):
        xs = range(grid_size) if y % 2 == 0 else range(grid_size - 1, -1, -1)
        order.extend((x, y) for x in xs)
    return order


def step_toward(env: EnvState, agent_id: int, target: tuple[int, int]) -> Action:
    """One move shrinking Euclidean distance to `target`.

    Prefers x-axis motion, then lower action code; skips moves that are
    off-grid or into another agent's cell. Falls back to the lowest legal
    action code if nothing improves.
    """
    agent = env.agents[agent_id]
    x, y = agent.position
    L = env.config.grid_size
    occupied = {a.position for a in env.agents if a.id != agent_id}
    candidates = []
    if target[0] > x:
        candidates.append(Action.RIGHT)
    elif target[0] < x:
        candidates.append(Action.LEFT)
    if target[1] > y:
        candidates.append(Action.DOWN)
    elif target[1] < y:
        candidates.append(Action.UP)
    candidates.sort(key=lambda a: (abs(ACTION_DELTAS[a][1]), int(a)))  # x-axis first
    fallback = [a for a in Action if a not in candidates]
    for a in candidates + fallback:
        dx, dy = ACTION_DELTAS[a]
        nx, ny = x + dx, y + dy
        if 0 <= nx < L and 0 <= ny < L and (nx, ny) not in occupied:
            return a
    return Action.UP


@dataclass
class SweepState:
    """Per-agent progress through the serpentine traversal."""
    index: int = 0


def sweep_action(env: EnvState, agent_id: int, state: SweepState) -> Action:
    order = serpentine_order(env.config.grid_size)
    pos = env.agents[agent_id].position
    while state.index < len(order) - 1 and order[state.index] == pos:
        state.index += 1
    return step_toward(env, agent_id, order[state.index])


def greedy_policy(env: EnvState, agent_id: int, sweep: SweepState,
                  omniscient: bool = False) -> Action:
    """Move toward the nearest known uncollected goal; sweep when none known."""
    goals = _targets(env, omniscient)
    if not goals:
        return sweep_action(env, agent_id, sweep)
    pos = env.agents[agent_id].position
    nearest = min(goals, key=lambda g: (_dist(g.position, pos), g.id))
    return step_toward(env, agent_id, nearest.position)


def random_policy(rng: np.random.Generator) -> Action:
    return Action(int(rng.integers(N_ACTIONS)))


def pso_assign(env: EnvState, rng: np.random.Generator,
               omniscient: bool = False) -> list[tuple[int, int] | None]:
    """Global-best PSO over agent-to-goal assignment vectors.

    Particles are real vectors of length n_agents whose rounded entries
    index goals; cost is the summed assignment distance. Returns one
    waypoint per agent (None when no goals are known).
    """
    goals = _targets(env, omniscient)
    n_agents = len(env.agents)
    if not goals:
        return [None] * n_agents
    n_goals = len(goals)
    agent_pos = np.array([a.position for a in env.agents], dtype=float)
    goal_pos = np.array([g.position for g in goals], dtype=float)

    def cost(vec: np.ndarray) -> float:
        idx = np.clip(np.rint(vec), 0, n_goals - 1).astype(int)
        return float(np.linalg.norm(agent_pos - goal_pos[idx], axis=1).sum())

    pos = rng.uniform(0, n_goals - 1, size=(PSO_PARTICLES, n_agents))
    vel = rng.uniform(-1.0, 1.0, size=(PSO_PARTICLES, n_agents))
    pbest = pos.copy()
    pbest_cost = np.array([cost(p) for p in pos])
    g_idx = int(np.argmin(pbest_cost))
    gbest, gbest_cost = pbest[g_idx].copy(), pbest_cost[g_idx]

    for _ in range(PSO_ITERATIONS):
        r1 = rng.uniform(size=pos.shape)
        r2 = rng.uniform(size=pos.shape)
        vel = (PSO_INERTIA * vel
               + PSO_COGNITIVE * r1 * (pbest - pos)
               + PSO_SOCIAL * r2 * (gbest - pos))
        pos = np.clip(pos + vel, 0, n_goals - 1)
        for i in range(PSO_PARTICLES):
            c = cost(pos[i])
            if c < pbest_cost[i]:
                pbest[i], pbest_cost[i] = pos[i].copy(), c
                if c < gbest_cost:
                    gbest, gbest_cost = pos[i].copy(), c
    assign = np.clip(np.rint(gbest), 0, n_goals - 1).astype(int)
    return [tuple(map(int, goal_pos[assign[i]])) for i in range(n_agents)]


def dbscan(points: np.ndarray, eps: float = DBSCAN_EPS,
           min_pts: int = DBSCAN_MIN_PTS) -> list[int]:
    """Textbook DBSCAN; noise points become singleton clusters.

    Returns a cluster label per point.
    """
    n = len(points)
    labels = [-1] * n
    visited = [False] * n
    cluster = 0

    def neighbors(i: int) -> list[int]:
        return [j for j in range(n)
                if _dist(points[i], points[j]) <= eps]

    for i in range(n):
        if visited[i]:
            continue
        visited[i] = True
        nbrs = neighbors(i)
        if len(nbrs) < min_pts:
            continue  # provisional noise; may be absorbed or become singleton
        labels[i] = cluster
        queue = [j for j in nbrs if j != i]
        while queue:
            j = queue.pop(0)
            if not visited[j]:
                visited[j] = True
                j_nbrs = neighbors(j)
                if len(j_nbrs) >= min_pts:
                    queue.extend(k for k in j_nbrs if labels[k] == -1)
            if labels[j] == -1:
                labels[j] = cluster
        cluster += 1
    for i in range(n):
        if labels[i] == -1:
            labels[i] = cluster
            cluster += 1
    return labels


def dbscan_assign(env: EnvState, eps: float = DBSCAN_EPS,
                  min_pts: int = DBSCAN_MIN_PTS,
                  omniscient: bool = False) -> list[tuple[int, int] | None]:
    """Cluster known goals, hand clusters to nearest agents, target the
    nearest goal inside the agent's cluster."""
    goals = _targets(env, omniscient)
    n_agents = len(env.agents)
    if not goals:
        return [None] * n_agents
    pts = np.array([g.position for g in goals], dtype=float)
    labels = dbscan(pts, eps, min_pts)
    clusters: dict[int, list[int]] = {}
    for i, lab in enumerate(labels):
        clusters.setdefault(lab, []).append(i)
    centroids = {lab: pts[idx].mean(axis=0) for lab, idx in clusters.items()}

    # Greedy cluster-to-agent matching by centroid distance; leftover agents
    # (or leftover clusters) fall back to globally nearest goals.
    assignment: dict[int, int] = {}
    free_agents = set(range(n_agents))
    free_clusters = set(clusters)
    pairs = sorted(
        ((_dist(centroids[lab], env.agents[a].position), lab, a)
         for lab in clusters for a in range(n_agents)),
        key=lambda t: (t[0], t[1], t[2]),
    )
    for _, lab, a in pairs:
        if lab in free_clusters and a in free_agents:
            assignment[a] = lab
            free_clusters.discard(lab)
            free_agents.discard(a)

    waypoints: list[tuple[int, int] | None] = []
    for a in range(n_agents):
        pos = env.agents[a].position
        if a in assignment:
            members = clusters[assignment[a]]
            best = min(members, key=lambda i: (_dist(pts[i], pos), i))
        else:
            best = min(range(len(pts)), key=lambda i: (_dist(pts[i], pos), i))
        waypoints.append(tuple(map(int, pts[best])))
    return waypoints


@dataclass
class BaselinePolicy:
    """Stateful per-episode policy wrapper with a common joint-action call."""
    kind: str
    seed: int = 0
    omniscient: bool = False
    rng: np.random.Generator = field(init=False)
    sweeps: dict[int, SweepState] = field(default_factory=dict)

    KINDS = ("random", "greedy", "pso", "dbscan")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown baseline {self.kind!r}; choices: {self.KINDS}")
        self.rng = np.random.default_rng(self.seed)

    def reset(self, seed: int) -> None:
        self.rng = np.random.default_rng(seed)
        self.sweeps.clear()

    def _sweep(self, agent_id: int) -> SweepState:
        return self.sweeps.setdefault(agent_id, SweepState())

    def actions(self, env: EnvState) -> list[Action]:
        n = len(env.agents)
        if self.kind == "random":
            return [random_policy(self.rng) for _ in range(n)]
        if self.kind == "greedy":
            return [greedy_policy(env, i, self._sweep(i), self.omniscient)
                    for i in range(n)]
        if self.kind == "pso":
            waypoints = pso_assign(env, self.rng, self.omniscient)
        else:
            waypoints = dbscan_assign(env, omniscient=self.omniscient)
        return [
            step_toward(env, i, wp) if wp is not None
            else sweep_action(env, i, self._sweep(i))
            for i, wp in enumerate(waypoints)
        ]
