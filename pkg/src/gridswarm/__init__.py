"""Multi-agent gridworld with a graph-attention Double DQN and baselines."""

__version__ = "0.1.0"
