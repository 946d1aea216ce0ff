import math

import pytest

from gridswarm.grid_world import (AgentState, EnvConfig, EnvState, GoalState,
                                  _vision_pass)


def make_env(grid_size, agent_positions, goal_positions, vision_radius=4.5,
             max_steps=150, discovered=None, collected=None,
             vision_pass=True) -> EnvState:
    """Hand-built environment for scripted scenarios."""
    cfg = EnvConfig(grid_size=grid_size, n_agents=len(agent_positions),
                    n_goals=max(1, len(goal_positions)),
                    vision_radius=vision_radius, max_steps=max_steps)
    agents = [AgentState(i, tuple(p)) for i, p in enumerate(agent_positions)]
    goals = [GoalState(i, tuple(p)) for i, p in enumerate(goal_positions)]
    if discovered is not None:
        for i in discovered:
            goals[i].discovered = True
    if collected is not None:
        for i in collected:
            goals[i].collected = True
            goals[i].discovered = True
    env = EnvState(config=cfg, agents=agents, goals=goals)
    if vision_pass:
        _vision_pass(env)
    return env


@pytest.fixture
def dist():
    return lambda p, q: math.hypot(p[0] - q[0], p[1] - q[1])
