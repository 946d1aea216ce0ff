"""`swarm` command line: train, eval, compare, ablate-k, export-attention.

Coordinates are x-rightward, y-downward; action Up decreases y. All outputs
are CSV/text artifacts; plotting is left to external tools. Exit codes:
0 success, 2 configuration error, 3 runtime failure.
"""
from __future__ import annotations

import argparse
import csv
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from . import dqn_trainer, gnn_policy
from .autodiff import ParamStore
from .baselines import BaselinePolicy
from .dqn_trainer import GnnModel, MlpModel, TrainConfig, evaluate, train
from .ego_graph import GraphConfig, build_ego_graph
from .grid_world import (ConfigError, EnvConfig, PRESETS, collection_fraction,
                         coverage_fraction, new_env, preset_config, step)
from .gnn_policy import PolicyConfig

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

DEFAULT_EVAL_EPISODES = 100
COMPARE_POLICIES = ("gnn", "mlp", "greedy", "random", "pso", "dbscan")

METRICS_HEADER = ["step", "episode", "collection_fraction", "coverage_fraction",
                  "steps_used", "epsilon", "loss_ma"]
REPORT_HEADER = ["policy", "preset", "seed", "collection_fraction",
                 "coverage_fraction", "mean_steps_to_done", "wall_clock_seconds"]
ABLATION_HEADER = ["k", "seed", "collection_fraction", "coverage_fraction",
                   "mean_steps_to_done", "max_out_degree"]


def _worker_count() -> int:
    try:
        return max(1, int(os.environ.get("SWARM_THREADS", "1")))
    except ValueError:
        return 1


def _parse_seeds(text: str) -> list[int]:
    return [int(s) for s in text.split(",") if s.strip()]


def _load_overrides(path: str) -> dict[str, str]:
    overrides = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#") or "=" not in line:
                continue
            key, value = line.split("=", 1)
            overrides[key.strip()] = value.strip()
    return overrides


def _resolve_env(args, overrides: dict[str, str]) -> tuple[EnvConfig, str]:
    preset = overrides.get("preset", args.preset)
    if preset:
        cfg = preset_config(preset)
        name = preset
    else:
        if args.agents is None or args.goals is None or args.grid is None:
            raise ConfigError("either --preset or --agents/--goals/--grid is required")
        cfg = EnvConfig(grid_size=args.grid, n_agents=args.agents, n_goals=args.goals,
                        max_steps=args.max_steps or 150)
        name = f"custom-{args.grid}"
    for key in ("agents", "goals", "grid", "max_steps", "vision_radius"):
        if key in overrides:
            field = {"agents": "n_agents", "goals": "n_goals", "grid": "grid_size"}.get(key, key)
            value = float(overrides[key]) if key == "vision_radius" else int(overrides[key])
            cfg = replace(cfg, **{field: value})
    cfg.validate()
    return cfg, name


def _resolve_train_cfg(args, overrides: dict[str, str], seed: int) -> TrainConfig:
    cfg = TrainConfig(seed=seed)
    if args.steps is not None:
        cfg = replace(cfg, total_steps=args.steps)
    numeric = {
        "steps": ("total_steps", int), "gamma": ("gamma", float), "lr": ("lr", float),
        "batch_size": ("batch_size", int), "update_every": ("update_every", int),
        "tau": ("tau", float), "eps_start": ("eps_start", float),
        "eps_end": ("eps_end", float), "eps_fraction": ("eps_fraction", float),
        "warmup": ("warmup", int), "eval_interval": ("eval_interval", int),
        "buffer_capacity": ("buffer_capacity", int),
        "beta_start": ("beta_start", float), "beta_end": ("beta_end", float),
    }
    for key, (field, cast) in numeric.items():
        if key in overrides:
            cfg = replace(cfg, **{field: cast(overrides[key])})
    cfg.validate()
    return cfg


def _make_model(policy: str, k: int):
    if policy == "gnn":
        return GnnModel(PolicyConfig(), GraphConfig(k=k))
    if policy == "mlp":
        return MlpModel()
    raise ConfigError(f"policy {policy!r} is not trainable (use gnn or mlp)")


def _write_manifest(path: str, entries: dict) -> None:
    with open(path, "w") as fh:
        for key, value in entries.items():
            fh.write(f"{key}={value}\n")


def _write_csv(path: str, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def cmd_train(args) -> int:
    overrides = _load_overrides(args.config) if args.config else {}
    env_cfg, preset = _resolve_env(args, overrides)
    seeds = _parse_seeds(args.seed)
    policy = overrides.get("policy", args.policy)
    if policy not in ("gnn", "mlp"):
        raise ConfigError(f"train needs --policy gnn or mlp, got {policy!r}")
    os.makedirs(args.out, exist_ok=True)
    for seed in seeds:
        cfg = _resolve_train_cfg(args, overrides, seed)
        model = _make_model(policy, args.k)
        manifest = {
            "command": "train", "preset": preset, "policy": policy,
            "agents": env_cfg.n_agents, "goals": env_cfg.n_goals,
            "grid": env_cfg.grid_size, "max_steps": env_cfg.max_steps,
            "vision_radius": env_cfg.vision_radius, "k": args.k, "seed": seed,
            "steps": cfg.total_steps, "gamma": cfg.gamma, "lr": cfg.lr,
            "batch_size": cfg.batch_size, "update_every": cfg.update_every,
            "tau": cfg.tau, "eps_start": cfg.eps_start, "eps_end": cfg.eps_end,
            "eps_fraction": cfg.eps_fraction, "warmup": cfg.warmup,
            "eval_interval": cfg.eval_interval,
            "buffer_capacity": cfg.buffer_capacity,
            "beta_start": cfg.beta_start, "beta_end": cfg.beta_end,
        }
        result = train(env_cfg, model, cfg, progress=args.progress)
        tag = f"{policy}_{preset}_seed{seed}"
        result.theta.save(os.path.join(args.out, f"checkpoint_{tag}.txt"))
        _write_csv(
            os.path.join(args.out, f"metrics_{tag}.csv"), METRICS_HEADER,
            [[m.step, m.episode, _fmt(m.collection_fraction), _fmt(m.coverage_fraction),
              m.steps_used, _fmt(m.epsilon), _fmt(m.loss_ma)] for m in result.metrics],
        )
        _write_manifest(os.path.join(args.out, f"manifest_{tag}.txt"), manifest)
        print(f"trained {tag}: {result.episodes} episodes, {result.updates} updates")
    return EXIT_OK


def _eval_model_episodes(env_cfg: EnvConfig, model, theta: ParamStore,
                         episodes: int, seed: int) -> list[tuple[float, float, int]]:
    workers = _worker_count()
    if workers == 1:
        return evaluate(env_cfg, model, theta, episodes, seed)
    chunks = np.array_split(np.arange(episodes), workers)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [
            pool.submit(_eval_chunk, env_cfg, model, theta, seed, list(map(int, chunk)))
            for chunk in chunks if len(chunk)
        ]
        results = []
        for f in futures:
            results.extend(f.result())
    return results


def _eval_chunk(env_cfg, model, theta, seed, episode_ids):
    return [dqn_trainer.greedy_rollout(env_cfg, model, theta, seed * 7_000_003 + e)
            for e in episode_ids]


def _eval_baseline_episodes(env_cfg: EnvConfig, kind: str, episodes: int,
                            seed: int) -> list[tuple[float, float, int]]:
    out = []
    for e in range(episodes):
        ep_seed = seed * 7_000_003 + e
        env = new_env(replace(env_cfg, rng_seed=ep_seed))
        policy = BaselinePolicy(kind, seed=ep_seed)
        while not env.done:
            step(env, policy.actions(env))
        out.append((collection_fraction(env), coverage_fraction(env), env.t))
    return out


def _report_row(policy: str, preset: str, seed,
                stats: list[tuple[float, float, int]], secs: float) -> list:
    arr = np.array(stats, dtype=float)
    return [policy, preset, seed, _fmt(arr[:, 0].mean()), _fmt(arr[:, 1].mean()),
            _fmt(arr[:, 2].mean()), _fmt(secs)]


def _run_policy(policy: str, env_cfg: EnvConfig, episodes: int, seed: int,
                checkpoints: dict[str, str]) -> list[tuple[float, float, int]]:
    if policy in ("gnn", "mlp"):
        path = checkpoints.get(policy)
        if not path:
            raise ConfigError(f"policy {policy!r} needs a checkpoint")
        theta = ParamStore.load(path)
        model = _make_model(policy, k=3)
        return _eval_model_episodes(env_cfg, model, theta, episodes, seed)
    return _eval_baseline_episodes(env_cfg, policy, episodes, seed)


def cmd_eval(args) -> int:
    overrides = _load_overrides(args.config) if args.config else {}
    env_cfg, preset = _resolve_env(args, overrides)
    seeds = _parse_seeds(args.seed)
    os.makedirs(args.out, exist_ok=True)
    checkpoints = {"gnn": args.checkpoint, "mlp": args.checkpoint}
    rows = []
    for seed in seeds:
        t0 = time.perf_counter()
        stats = _run_policy(args.policy, env_cfg, args.episodes, seed, checkpoints)
        rows.append(_report_row(args.policy, preset, seed, stats,
                                time.perf_counter() - t0))
    path = os.path.join(args.out, f"eval_{args.policy}_{preset}.csv")
    _write_csv(path, REPORT_HEADER, rows)
    print(f"wrote {path}")
    return EXIT_OK


def cmd_compare(args) -> int:
    env_cfg, preset = _resolve_env(args, {})
    seeds = _parse_seeds(args.seed)
    policies = args.policies.split(",") if args.policies else list(COMPARE_POLICIES)
    checkpoints = {"gnn": args.gnn_checkpoint, "mlp": args.mlp_checkpoint}
    for p in policies:
        if p in ("gnn", "mlp") and not checkpoints.get(p):
            raise ConfigError(f"compare includes {p!r} but no checkpoint was given")
    os.makedirs(args.out, exist_ok=True)
    rows, per_policy = [], {}
    for policy in policies:
        all_stats = []
        for seed in seeds:
            t0 = time.perf_counter()
            stats = _run_policy(policy, env_cfg, args.episodes, seed, checkpoints)
            rows.append(_report_row(policy, preset, seed, stats,
                                    time.perf_counter() - t0))
            all_stats.extend(stats)
        per_policy[policy] = all_stats
        rows.append(_report_row(policy, preset, "all", all_stats, 0.0))
    path = os.path.join(args.out, f"compare_{preset}.csv")
    _write_csv(path, REPORT_HEADER, rows)
    if "greedy" in per_policy and "random" in per_policy:
        g = np.mean([s[0] for s in per_policy["greedy"]])
        r = np.mean([s[0] for s in per_policy["random"]])
        if g < r:
            print("warning: greedy collection below random", file=sys.stderr)
    print(f"wrote {path}")
    return EXIT_OK


class _VerifyingGnnModel(GnnModel):
    """GnnModel that checks the agent-agent out-degree bound on every graph."""

    def __init__(self, k: int):
        super().__init__(PolicyConfig(), GraphConfig(k=k))
        self.max_out_degree = 0

    def observe(self, env, agent_id):
        graph = build_ego_graph(env, agent_id, self.graph_cfg)
        out_deg: dict[int, int] = {}
        for e in graph.edges:
            if e.kind == "agent-agent":
                out_deg[e.src] = out_deg.get(e.src, 0) + 1
        worst = max(out_deg.values(), default=0)
        self.max_out_degree = max(self.max_out_degree, worst)
        if worst > self.graph_cfg.k:
            raise AssertionError(f"out-degree {worst} exceeds k={self.graph_cfg.k}")
        return gnn_policy.GraphSnapshot.from_graph(graph, env.config.grid_size)


def cmd_ablate_k(args) -> int:
    overrides = _load_overrides(args.config) if args.config else {}
    if not args.preset and args.agents is None:
        args.preset = "cfg-40"
    env_cfg, preset = _resolve_env(args, overrides)
    seeds = _parse_seeds(args.seed)
    os.makedirs(args.out, exist_ok=True)
    rows = []
    for k in range(2, 8):
        for seed in seeds:
            cfg = _resolve_train_cfg(args, overrides, seed)
            model = _VerifyingGnnModel(k)
            result = train(env_cfg, model, cfg, progress=args.progress)
            stats = evaluate(env_cfg, model, result.theta, args.episodes, seed)
            arr = np.array(stats, dtype=float)
            rows.append([k, seed, _fmt(arr[:, 0].mean()), _fmt(arr[:, 1].mean()),
                         _fmt(arr[:, 2].mean()), model.max_out_degree])
    path = os.path.join(args.out, "ablate_k.csv")
    _write_csv(path, ABLATION_HEADER, rows)
    print(f"wrote {path}")
    return EXIT_OK


def cmd_export_attention(args) -> int:
    env_cfg, preset = _resolve_env(args, {})
    seeds = _parse_seeds(args.seed)
    theta = ParamStore.load(args.checkpoint)
    model = _make_model("gnn", args.k)
    os.makedirs(args.out, exist_ok=True)
    env = new_env(replace(env_cfg, rng_seed=seeds[0]))
    at_step = args.at_step if args.at_step is not None else env_cfg.max_steps // 2
    snap = None
    while True:
        if env.t == at_step or env.done:
            break
        obs = [model.observe(env, a.id) for a in env.agents]
        q = model.q_batch(obs, theta).data
        step(env, [gnn_policy.greedy_action(q[i]) for i in range(len(obs))])
    if env.t < at_step:
        raise RuntimeError(f"episode ended at step {env.t} before --at-step {at_step}")
    snap = model.observe(env, 0)
    out = gnn_policy.forward(snap, theta, model.policy_cfg, want_trace=True)
    table = gnn_policy.export_attention(out.trace, snap)
    path = os.path.join(args.out, f"attention_{preset}_step{at_step}.csv")
    with open(path, "w") as fh:
        fh.write(table)
    print(f"wrote {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="swarm",
        description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--preset", choices=sorted(PRESETS), default=None)
        p.add_argument("--agents", type=int, default=None)
        p.add_argument("--goals", type=int, default=None)
        p.add_argument("--grid", type=int, default=None)
        p.add_argument("--max-steps", type=int, default=None)
        p.add_argument("--seed", default="0", help="comma-separated seed list")
        p.add_argument("--out", default="runs")
        p.add_argument("--config", default=None, help="key=value override file")
        p.add_argument("--k", type=int, default=3, help="agent neighbor limit")
        p.add_argument("--progress", action="store_true")

    p = sub.add_parser("train", help="train a gnn or mlp policy")
    common(p)
    p.add_argument("--policy", default="gnn", choices=["gnn", "mlp"])
    p.add_argument("--steps", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate one policy")
    common(p)
    p.add_argument("--policy", default="gnn",
                   choices=["gnn", "mlp", "greedy", "random", "pso", "dbscan"])
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--episodes", type=int, default=DEFAULT_EVAL_EPISODES)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="benchmark all policies on one preset")
    common(p)
    p.add_argument("--policies", default=None,
                   help="comma list; default all six")
    p.add_argument("--gnn-checkpoint", default=None)
    p.add_argument("--mlp-checkpoint", default=None)
    p.add_argument("--episodes", type=int, default=DEFAULT_EVAL_EPISODES)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("ablate-k", help="sweep the neighbor limit k from 2 to 7")
    common(p)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--episodes", type=int, default=20)
    p.set_defaults(func=cmd_ablate_k)

    p = sub.add_parser("export-attention", help="dump an attention heatmap CSV")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--at-step", type=int, default=None)
    p.set_defaults(func=cmd_export_attention)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
