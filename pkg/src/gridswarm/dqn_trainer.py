"""Double DQN training loop with prioritized replay and soft target updates."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import gnn_policy
from .autodiff import AdamState, ParamStore, Tape, Tensor, adam_step
from .ego_graph import GraphConfig, build_ego_graph
from .gnn_policy import GraphSnapshot, PolicyConfig
from .grid_world import EnvConfig, EnvState, new_env, step, collection_fraction, coverage_fraction
from .replay import ReplayBuffer, SampleBatch, Transition

N_ACTIONS = 4


@dataclass(frozen=True)
class TrainConfig:
    total_steps: int = 250_000
    gamma: float = 0.99
    lr: float = 0.0005
    batch_size: int = 64
    update_every: int = 4
    tau: float = 0.001
    eps_start: float = 1.0
    eps_end: float = 0.01
    eps_fraction: float = 1.0   # fraction of total steps over which epsilon decays
    warmup: int = 1_000
    eval_interval: int = 5_000
    buffer_capacity: int = 100_000
    beta_start: float = 0.4
    beta_end: float = 1.0
    seed: int = 0

    def validate(self) -> None:
        if not (0.0 < self.gamma <= 1.0):
            raise ValueError("gamma must be in (0, 1]")
        if not (0.0 < self.tau <= 1.0):
            raise ValueError("tau must be in (0, 1]")
        if self.batch_size > self.buffer_capacity:
            raise ValueError("batch_size cannot exceed buffer capacity")


class GnnModel:
    """Graph-attention feature extractor; one ego graph per agent."""

    name = "gnn"

    def __init__(self, policy_cfg: PolicyConfig | None = None,
                 graph_cfg: GraphConfig | None = None):
        self.policy_cfg = policy_cfg or PolicyConfig()
        self.graph_cfg = graph_cfg or GraphConfig()

    def init_params(self, seed: int) -> ParamStore:
        return gnn_policy.init_params(self.policy_cfg, seed)

    def observe(self, env: EnvState, agent_id: int) -> GraphSnapshot:
        graph = build_ego_graph(env, agent_id, self.graph_cfg)
        return GraphSnapshot.from_graph(graph, env.config.grid_size)

    def q_batch(self, obs: list[GraphSnapshot], params: ParamStore,
                tape: Tape | None = None) -> Tensor:
        feats, onehot, ebar, mask, edge_w = gnn_policy.pad_batch(obs)
        q, _ = gnn_policy.forward_batch(feats, onehot, ebar, mask, edge_w,
                                        params, self.policy_cfg, tape=tape)
        return q


class MlpModel:
    """Graph-free ablation: the observer's 12-feature vector through an MLP."""

    name = "mlp"

    def __init__(self, hidden_sizes: tuple[int, ...] = (64, 64)):
        self.hidden_sizes = hidden_sizes

    def init_params(self, seed: int) -> ParamStore:
        rng = np.random.default_rng(seed)
        params = ParamStore()
        dims = [12, *self.hidden_sizes, N_ACTIONS]
        for i, (din, dout) in enumerate(zip(dims, dims[1:])):
            params.create(f"W{i}", ad.xavier_uniform(rng, din, dout, (din, dout)))
            params.create(f"b{i}", np.zeros(dout))
        return params

    def observe(self, env: EnvState, agent_id: int) -> np.ndarray:
        graph = build_ego_graph(env, agent_id, GraphConfig())
        return graph.features[0].copy()

    def q_batch(self, obs: list[np.ndarray], params: ParamStore,
                tape: Tape | None = None) -> Tensor:
        x = Tensor(np.stack(obs), tape=tape)
        n_layers = len(self.hidden_sizes) + 1
        for i in range(n_layers):
            x = ad.affine(x, params[f"W{i}"], params[f"b{i}"])
            if i < n_layers - 1:
                x = ad.relu(x)
        return x


def epsilon_at(step_idx: int, cfg: TrainConfig) -> float:
    """Linear decay from eps_start to eps_end over eps_fraction of the run."""
    horizon = max(1, int(cfg.total_steps * cfg.eps_fraction))
    frac = min(1.0, step_idx / horizon)
    return cfg.eps_start + frac * (cfg.eps_end - cfg.eps_start)


def beta_at(step_idx: int, cfg: TrainConfig) -> float:
    frac = min(1.0, step_idx / max(1, cfg.total_steps))
    return cfg.beta_start + frac * (cfg.beta_end - cfg.beta_start)


def select_action(q_values: np.ndarray, eps: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy over 4 actions."""
    if rng.random() < eps:
        return int(rng.integers(N_ACTIONS))
    return gnn_policy.greedy_action(q_values)


def td_target(batch: SampleBatch, model, theta: ParamStore, theta_prime: ParamStore,
              gamma: float) -> np.ndarray:
    """Double DQN targets: online net picks the action, target net scores it."""
    next_obs = [t.next_obs for t in batch.transitions]
    q_online = model.q_batch(next_obs, theta).data
    q_target = model.q_batch(next_obs, theta_prime).data
    a_star = np.argmax(q_online, axis=1)
    bootstrap = q_target[np.arange(len(a_star)), a_star]
    rewards = np.array([t.reward for t in batch.transitions])
    terminal = np.array([t.terminal for t in batch.transitions])
    return rewards + gamma * bootstrap * ~terminal


def loss_and_grads(batch: SampleBatch, targets: np.ndarray, weights: np.ndarray,
                   model, theta: ParamStore) -> tuple[float, np.ndarray]:
    """Weighted squared TD loss; gradients accumulate into theta.

    Returns (loss value, per-sample TD errors for the priority update).
    """
    tape = Tape()
    obs = [t.obs for t in batch.transitions]
    actions = np.array([t.action for t in batch.transitions])
    q = model.q_batch(obs, theta, tape=tape)
    onehot = np.zeros((len(actions), N_ACTIONS))
    onehot[np.arange(len(actions)), actions] = 1.0
    q_sel = ad.sum_last(ad.mul(q, Tensor(onehot)))
    delta = ad.sub(Tensor(targets), q_sel)
    loss = ad.mean_all(ad.mul(Tensor(weights), ad.mul(delta, delta)))
    td_errors = delta.data.copy()
    ad.backward(tape, loss)
    return float(loss.data), td_errors


def soft_update(theta_prime: ParamStore, theta: ParamStore, tau: float) -> None:
    theta_prime.soft_update_from(theta, tau)


@dataclass
class MetricsRow:
    step: int
    episode: int
    collection_fraction: float
    coverage_fraction: float
    steps_used: int
    epsilon: float
    loss_ma: float


@dataclass
class TrainResult:
    theta: ParamStore
    metrics: list[MetricsRow] = field(default_factory=list)
    episodes: int = 0
    updates: int = 0


def train(env_cfg: EnvConfig, model, cfg: TrainConfig,
          progress: bool = False) -> TrainResult:
    """Run the full training loop; deterministic under cfg.seed."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    theta = model.init_params(cfg.seed)
    theta_prime = theta.copy()
    opt = AdamState(lr=cfg.lr)
    buf = ReplayBuffer(capacity=cfg.buffer_capacity, seed=cfg.seed + 1)

    result = TrainResult(theta=theta)
    episode = 0
    loss_ma = 0.0
    last_ep = (0.0, 0.0, 0)  # collection, coverage, steps of last finished episode

    env = new_env(_episode_cfg(env_cfg, cfg.seed, episode))
    obs = [model.observe(env, a.id) for a in env.agents]

    for step_idx in range(cfg.total_steps):
        eps = epsilon_at(step_idx, cfg)
        if eps < 1.0:
            q = model.q_batch(obs, theta).data
            actions = [select_action(q[i], eps, rng) for i in range(len(obs))]
        else:
            actions = [int(rng.integers(N_ACTIONS)) for _ in obs]
        res = step(env, actions)
        next_obs = [model.observe(env, a.id) for a in env.agents]
        for i in range(len(obs)):
            buf.push(Transition(obs[i], actions[i], res.rewards[i], next_obs[i],
                                res.done, agent_id=i))
        obs = next_obs

        if step_idx >= cfg.warmup and step_idx % cfg.update_every == 0 \
                and len(buf) >= cfg.batch_size:
            batch = buf.sample(cfg.batch_size, beta_at(step_idx, cfg))
            targets = td_target(batch, model, theta, theta_prime, cfg.gamma)
            loss, td_errors = loss_and_grads(batch, targets, batch.weights, model, theta)
            adam_step(theta, opt)
            buf.update_priorities(batch, td_errors)
            soft_update(theta_prime, theta, cfg.tau)
            loss_ma = 0.99 * loss_ma + 0.01 * loss if result.updates else loss
            result.updates += 1

        if res.done:
            last_ep = (collection_fraction(env), coverage_fraction(env), env.t)
            episode += 1
            env = new_env(_episode_cfg(env_cfg, cfg.seed, episode))
            obs = [model.observe(env, a.id) for a in env.agents]

        if (step_idx + 1) % cfg.eval_interval == 0:
            result.metrics.append(MetricsRow(
                step=step_idx + 1, episode=episode,
                collection_fraction=last_ep[0], coverage_fraction=last_ep[1],
                steps_used=last_ep[2], epsilon=eps, loss_ma=loss_ma,
            ))
            if progress:
                print(f"step {step_idx + 1}/{cfg.total_steps} eps={eps:.3f} "
                      f"loss_ma={loss_ma:.4f} last_ep_collection={last_ep[0]:.2f}",
                      flush=True)

    result.episodes = episode
    return result


def _episode_cfg(env_cfg: EnvConfig, seed: int, episode: int) -> EnvConfig:
    from dataclasses import replace
    return replace(env_cfg, rng_seed=seed * 1_000_003 + episode)


def greedy_rollout(env_cfg: EnvConfig, model, theta: ParamStore,
                   episode_seed: int) -> tuple[float, float, int]:
    """One greedy-policy episode; returns (collection, coverage, steps used)."""
    from dataclasses import replace
    env = new_env(replace(env_cfg, rng_seed=episode_seed))
    while not env.done:
        obs = [model.observe(env, a.id) for a in env.agents]
        q = model.q_batch(obs, theta).data
        step(env, [gnn_policy.greedy_action(q[i]) for i in range(len(obs))])
    return collection_fraction(env), coverage_fraction(env), env.t


def evaluate(env_cfg: EnvConfig, model, theta: ParamStore, episodes: int = 100,
             seed: int = 0) -> list[tuple[float, float, int]]:
    """Greedy evaluation over fresh episodes with derived seeds."""
    return [greedy_rollout(env_cfg, model, theta, seed * 7_000_003 + e)
            for e in range(episodes)]
