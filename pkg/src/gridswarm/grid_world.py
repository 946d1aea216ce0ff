"""Deterministic multi-agent gridworld with circular vision and goal collection.

Coordinates: x grows rightward, y grows downward. Up decreases y.
Agents spawn on the border, goals in the interior. A goal is *discovered*
when it falls inside any agent's vision disk and *collected* when an agent
enters its cell.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

REWARD_COLLECT = 10.0
REWARD_INVALID = -5.0


class Action(IntEnum):
    UP = 0
    DOWN = 1
    LEFT = 2
    RIGHT = 3


# (dx, dy) per action code
ACTION_DELTAS = {
    Action.UP: (0, -1),
    Action.DOWN: (0, 1),
    Action.LEFT: (-1, 0),
    Action.RIGHT: (1, 0),
}


class ConfigError(ValueError):
    """Invalid environment configuration."""


class EpisodeFinished(RuntimeError):
    """step() was called on a finished episode."""


@dataclass(frozen=True)
class EnvConfig:
    grid_size: int
    n_agents: int
    n_goals: int
    vision_radius: float = 4.5
    max_steps: int = 150
    rng_seed: int = 0

    def validate(self) -> None:
        L = self.grid_size
        if L < 2:
            raise ConfigError(f"grid_size must be >= 2, got {L}")
        border_cells = 4 * (L - 1)
        interior_cells = (L - 2) * (L - 2)
        if not (1 <= self.n_agents <= border_cells):
            raise ConfigError(
                f"n_agents={self.n_agents} outside [1, {border_cells}] for grid_size={L}"
            )
        if not (1 <= self.n_goals <= interior_cells):
            raise ConfigError(
                f"n_goals={self.n_goals} outside [1, {interior_cells}] for grid_size={L}"
            )
        if self.vision_radius <= 0:
            raise ConfigError("vision_radius must be positive")
        if self.max_steps < 1:
            raise ConfigError("max_steps must be >= 1")


# Table-driven presets: (agents, goals, grid, steps/episode).
PRESETS: dict[str, tuple[int, int, int, int]] = {
    "cfg-10": (2, 10, 10, 150),
    "cfg-20": (4, 20, 20, 150),
    "cfg-30": (8, 43, 30, 175),
    "cfg-40": (15, 76, 40, 200),
    "cfg-50": (23, 118, 50, 250),
    "cfg-60": (33, 169, 60, 300),
    "cfg-bench": (5, 76, 100, 600),
}


def preset_config(name: str, seed: int = 0) -> EnvConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choices: {sorted(PRESETS)}")
    n, m, grid, steps = PRESETS[name]
    return EnvConfig(grid_size=grid, n_agents=n, n_goals=m, max_steps=steps, rng_seed=seed)


@dataclass
class AgentState:
    id: int
    position: tuple[int, int]


@dataclass
class GoalState:
    id: int
    position: tuple[int, int]
    discovered: bool = False
    collected: bool = False


@dataclass
class StepResult:
    rewards: list[float]
    invalid: list[bool]
    collected_goal_ids: list[int]
    discovered_goal_ids: list[int]
    done: bool


@dataclass
class EnvState:
    config: EnvConfig
    agents: list[AgentState]
    goals: list[GoalState]
    t: int = 0
    covered: set[tuple[int, int]] = field(default_factory=set)
    done: bool = False


def _border_cells(L: int) -> list[tuple[int, int]]:
    cells = []
    for x in range(L):
        for y in range(L):
            if x == 0 or x == L - 1 or y == 0 or y == L - 1:
                cells.append((x, y))
    return cells


def _interior_cells(L: int) -> list[tuple[int, int]]:
    return [(x, y) for x in range(1, L - 1) for y in range(1, L - 1)]


def _vision_pass(env: EnvState) -> list[int]:
    """Update covered cells and discovery flags; return newly discovered goal ids."""
    L = env.config.grid_size
    r2 = env.config.vision_radius ** 2
    newly = []
    for agent in env.agents:
        ax, ay = agent.position
        r = int(math.floor(env.config.vision_radius))
        for x in range(max(0, ax - r), min(L, ax + r + 1)):
            for y in range(max(0, ay - r), min(L, ay + r + 1)):
                if (x - ax) ** 2 + (y - ay) ** 2 <= r2:
                    env.covered.add((x, y))
    for goal in env.goals:
        if goal.discovered:
            continue
        gx, gy = goal.position
        for agent in env.agents:
            ax, ay = agent.position
            if (gx - ax) ** 2 + (gy - ay) ** 2 <= r2:
                goal.discovered = True
                newly.append(goal.id)
                break
    return newly


def new_env(config: EnvConfig) -> EnvState:
    """Create a fresh environment: agents on the border, goals in the interior."""
    config.validate()
    rng = np.random.default_rng(config.rng_seed)
    border = _border_cells(config.grid_size)
    interior = _interior_cells(config.grid_size)
    agent_idx = rng.choice(len(border), size=config.n_agents, replace=False)
    goal_idx = rng.choice(len(interior), size=config.n_goals, replace=False)
    agents = [AgentState(i, border[j]) for i, j in enumerate(agent_idx)]
    goals = [GoalState(i, interior[j]) for i, j in enumerate(goal_idx)]
    env = EnvState(config=config, agents=agents, goals=goals)
    _vision_pass(env)
    return env


def step(env: EnvState, actions: list[Action | int]) -> StepResult:
    """Advance the simulation by one joint step.

    Agents move simultaneously; conflicts are resolved in ascending agent-id
    order and losers stay in place with an invalid-move penalty.
    """
    if env.done:
        raise EpisodeFinished("episode is finished; create a new environment")
    if len(actions) != len(env.agents):
        raise ValueError(f"expected {len(env.agents)} actions, got {len(actions)}")

    L = env.config.grid_size
    n = len(env.agents)
    rewards = [0.0] * n
    invalid = [False] * n
    positions = {a.id: a.position for a in env.agents}
    goal_at = {g.position: g for g in env.goals if not g.collected}

    for agent in env.agents:
        dx, dy = ACTION_DELTAS[Action(int(actions[agent.id]))]
        x, y = positions[agent.id]
        tx, ty = x + dx, y + dy
        occupied = {p for aid, p in positions.items() if aid != agent.id}
        if not (0 <= tx < L and 0 <= ty < L) or (tx, ty) in occupied:
            invalid[agent.id] = True
            rewards[agent.id] = REWARD_INVALID
        else:
            positions[agent.id] = (tx, ty)

    collected_ids = []
    for agent in env.agents:
        agent.position = positions[agent.id]
        goal = goal_at.get(agent.position)
        if goal is not None and not goal.collected:
            goal.collected = True
            goal.discovered = True
            rewards[agent.id] = REWARD_COLLECT
            collected_ids.append(goal.id)

    discovered_ids = _vision_pass(env)
    env.t += 1
    all_collected = all(g.collected for g in env.goals)
    env.done = all_collected or env.t >= env.config.max_steps
    return StepResult(rewards, invalid, collected_ids, discovered_ids, env.done)


def visible_goals(env: EnvState, agent_id: int) -> list[GoalState]:
    """Discovered, uncollected goals within vision radius, nearest first."""
    agent = env.agents[agent_id]
    ax, ay = agent.position
    r2 = env.config.vision_radius ** 2
    hits = [
        g
        for g in env.goals
        if g.discovered
        and not g.collected
        and (g.position[0] - ax) ** 2 + (g.position[1] - ay) ** 2 <= r2
    ]
    hits.sort(key=lambda g: ((g.position[0] - ax) ** 2 + (g.position[1] - ay) ** 2, g.id))
    return hits


def coverage_fraction(env: EnvState) -> float:
    return len(env.covered) / env.config.grid_size ** 2


def collection_fraction(env: EnvState) -> float:
    return sum(g.collected for g in env.goals) / len(env.goals)
