"""Experiment runner: train agents, verify the target theory, run the
credit-assignment study, and evaluate checkpoints, all driven by one
YAML config.

Subcommands write CSV logs with header rows and '.'-decimal numbers:

* ``train``: per seed, ``train_<seed>.csv`` (update_idx, loss, grad_norm,
  epsilon), ``eval_<seed>.csv`` (update_idx, eval_return), a
  ``meta_<seed>.json`` sidecar, and a final ``checkpoint_<seed>.npz``.
* ``theory``: ``theory.csv`` with closed-form vs Monte Carlo moments per
  (factorisation, construction) and a pass flag.
* ``tabular-credit``: ``tabular_credit_<algorithm>.csv`` frequency curves.
* ``eval``: prints the mean greedy return of a stored checkpoint.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import yaml

from decq.agents import (
    NeuralAgent,
    TabularUtilities,
    tabular_select,
    tabular_update,
)
from decq.config import (
    CreditExperimentConfig,
    RunConfig,
    config_hash,
    load_config,
)
from decq.core import ActionSpaceSpec, Transition
from decq.envs import (
    NoiseWrapperConfig,
    NoisyEnv,
    PointMassConfig,
    PointMassEnv,
    TabularCreditConfig,
    TabularCreditEnv,
    tabular_credit_step,
)
from decq.metrics import evaluate
from decq.net import forward, load_params, save_params
from decq.theory import (
    NoiseModel,
    closed_form_target_moments,
    simulate_target_diff,
    verify_inequalities,
)

__all__ = [
    "build_env",
    "run_train",
    "run_theory",
    "run_tabular_credit",
    "run_eval",
    "credit_frequencies",
    "main",
]


def _child_seed(seed_sequence: np.random.SeedSequence) -> int:
    return int(seed_sequence.generate_state(1)[0])


def build_env(env_config, seed: int):
    """Instantiate the configured environment, noise-wrapped if requested."""
    root = np.random.SeedSequence(seed)
    env_ss, noise_ss = root.spawn(2)
    if env_config.name == "point_mass":
        env = PointMassEnv(
            PointMassConfig(
                N=env_config.N,
                bins=env_config.bins,
                step_scale=env_config.step_scale,
                horizon=env_config.horizon,
                target=env_config.target,
            ),
            seed=_child_seed(env_ss),
        )
    elif env_config.name == "tabular_credit":
        env = TabularCreditEnv(TabularCreditConfig(N=env_config.N, n=env_config.n))
    else:
        raise ValueError(f"env.name: unknown environment {env_config.name!r}")
    if env_config.reward_sigma > 0 or env_config.state_sigma > 0:
        env = NoisyEnv(
            env,
            NoiseWrapperConfig(
                reward_sigma=env_config.reward_sigma,
                state_sigma=env_config.state_sigma,
            ),
            seed=_child_seed(noise_ss),
        )
    return env


def _step_once(agent: NeuralAgent, env, state: np.ndarray) -> np.ndarray:
    """One behaviour step fed into the agent; resets on episode end."""
    action = agent.act(state)
    next_state, reward, done = env.step(action)
    agent.observe(
        Transition(
            state=state, action=action, reward=reward,
            next_state=next_state, done=done,
        )
    )
    return env.reset() if done else next_state


def _train_one_seed(config: RunConfig, seed: int, out_dir: Path) -> int:
    tr = config.training
    root = np.random.SeedSequence(seed)
    env_ss, agent_ss, eval_ss = root.spawn(3)
    env = build_env(config.env, _child_seed(env_ss))
    eval_env = build_env(config.env, _child_seed(eval_ss))
    agent = NeuralAgent(config.agent, env.spec, env.observation_dim, seed=_child_seed(agent_ss))

    digest = config_hash(config)
    with open(out_dir / f"meta_{seed}.json", "w", encoding="utf-8") as fh:
        json.dump(
            {"seed": seed, "config_hash": digest, "algorithm": config.agent.algorithm},
            fh,
            indent=2,
        )
        fh.write("\n")

    state = env.reset()
    for _ in range(tr.warmup_steps):
        state = _step_once(agent, env, state)
    # Sampling needs a full batch of assembled transitions; top up if the
    # configured warmup was too short to provide one.
    while len(agent.buffer) < config.agent.batch_size:
        state = _step_once(agent, env, state)

    status = 0
    with open(out_dir / f"train_{seed}.csv", "w", newline="", encoding="utf-8") as train_fh, \
            open(out_dir / f"eval_{seed}.csv", "w", newline="", encoding="utf-8") as eval_fh:
        train_csv = csv.writer(train_fh)
        eval_csv = csv.writer(eval_fh)
        train_csv.writerow(["update_idx", "loss", "grad_norm", "epsilon"])
        eval_csv.writerow(["update_idx", "eval_return"])
        for update_idx in range(1, tr.total_updates + 1):
            for _ in range(tr.steps_per_update):
                state = _step_once(agent, env, state)
            try:
                report = agent.update()
            except ValueError as exc:
                print(f"seed {seed}: update {update_idx} failed: {exc}", file=sys.stderr)
                status = 1
                break
            if not math.isfinite(report.loss):
                print(
                    f"seed {seed}: non-finite loss at update {update_idx}, aborting",
                    file=sys.stderr,
                )
                status = 1
                break
            train_csv.writerow(
                [update_idx, float(report.loss), float(report.grad_norm), float(agent.epsilon)]
            )
            if update_idx % tr.eval_every == 0:
                eval_csv.writerow(
                    [update_idx, float(evaluate(agent, eval_env, tr.eval_episodes))]
                )

    if status == 0:
        flat = {}
        for k, params in enumerate(agent.critic.online):
            for name, arr in params.items():
                flat[f"critic{k}_{name}"] = arr
        save_params(
            out_dir / f"checkpoint_{seed}.npz",
            flat,
            meta={
                "algorithm": config.agent.algorithm,
                "K": config.agent.K,
                "hidden": config.agent.hidden,
                "sizes": list(env.spec.sizes),
                "observation_dim": env.observation_dim,
                "seed": seed,
                "config_hash": digest,
            },
        )
    return status


def run_train(config: RunConfig, out_dir: Path | None = None) -> int:
    """Train on every configured seed; nonzero if any seed aborts."""
    out = Path(out_dir if out_dir is not None else config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    status = 0
    for seed in config.seeds:
        status = max(status, _train_one_seed(config, seed, out))
    return status


def run_theory(config: RunConfig, out_dir: Path | None = None) -> int:
    """Closed-form vs Monte Carlo table; nonzero iff an inequality fails."""
    th = config.theory
    out = Path(out_dir if out_dir is not None else config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    specs = [ActionSpaceSpec(sizes) for sizes in th.specs]
    noise = NoiseModel(b=th.b, gamma=th.gamma)
    ineq_rows = verify_inequalities(specs, noise, K=th.K)
    children = np.random.SeedSequence(th.seed).spawn(4 * len(specs))

    with open(out / "theory.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["mode", "N", "sizes", "b", "gamma", "K",
             "mean_cf", "var_cf", "mean_mc", "var_mc", "se", "pass"]
        )
        for s, (spec, ineq) in enumerate(zip(specs, ineq_rows)):
            for m, mode in enumerate(("dqn", "dec", "ens", "sum")):
                k_used = th.K if mode == "ens" else 1
                mean_cf, var_cf = closed_form_target_moments(spec, noise, mode, K=k_used)
                stats = simulate_target_diff(
                    spec, noise, mode, K=k_used, trials=th.trials,
                    seed=_child_seed(children[4 * s + m]),
                )
                ok = ineq.passed and abs(stats.mean - mean_cf) <= 5 * stats.std_error_mean
                writer.writerow(
                    [mode, spec.dims, "x".join(str(n) for n in spec.sizes),
                     th.b, th.gamma, k_used,
                     mean_cf, var_cf, stats.mean, stats.variance,
                     stats.std_error_mean, str(ok).lower()]
                )

    failures = sum(1 for row in ineq_rows if not row.passed)
    print(f"inequality failures: {failures}/{len(ineq_rows)}")
    return 1 if failures else 0


def credit_frequencies(
    cfg: CreditExperimentConfig,
) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Optimal-last-sub-action selection curves for each algorithm.

    Runs ``trials`` independent tables per algorithm; trial t of every
    algorithm shares one seed, so the only difference between curves is
    the update rule.  Returns per algorithm (frequency, 95% CI half-width)
    arrays indexed by update step.
    """
    env_cfg = TabularCreditConfig(N=cfg.N, n=cfg.n)
    spec = env_cfg.spec
    last = cfg.N - 1
    opt_last = env_cfg.optimal[last]
    counts = {algo: np.zeros(cfg.updates) for algo in cfg.algorithms}
    for child in np.random.SeedSequence(cfg.seed).spawn(cfg.trials):
        for algo in cfg.algorithms:
            rng = np.random.default_rng(child)
            tab = TabularUtilities(
                spec, rng, low=cfg.init_low, high=cfg.init_high, alpha=cfg.alpha
            )
            tab.set_value(last, opt_last, cfg.optimal_value)
            beta = cfg.beta if algo == "revalued" else 0.0
            hits = counts[algo]
            for u in range(cfg.updates):
                action = tabular_select(tab, cfg.epsilon, rng)
                if action[last] == opt_last:
                    hits[u] += 1.0
                reward, _ = tabular_credit_step(env_cfg, action)
                tabular_update(tab, action, reward, beta, cfg.weight_fn, cfg.c_tab)
    out = {}
    for algo, hits in counts.items():
        freq = hits / cfg.trials
        ci = 1.96 * np.sqrt(freq * (1.0 - freq) / cfg.trials)
        out[algo] = (freq, ci)
    return out


def run_tabular_credit(config: RunConfig, out_dir: Path | None = None) -> int:
    """Write one frequency-curve CSV per configured algorithm."""
    out = Path(out_dir if out_dir is not None else config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    curves = credit_frequencies(config.tabular_credit)
    for algo, (freq, ci) in curves.items():
        with open(out / f"tabular_credit_{algo}.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["update_idx", "frequency", "ci_halfwidth"])
            for u in range(len(freq)):
                writer.writerow([u + 1, float(freq[u]), float(ci[u])])
    return 0


class _CheckpointPolicy:
    """Greedy evaluation wrapper over stored critic parameters."""

    def __init__(self, critics: list[dict[str, np.ndarray]], n_dims: int) -> None:
        self._critics = critics
        self._n_dims = n_dims

    def greedy_utilities(self, state: np.ndarray) -> list[np.ndarray]:
        per_critic = [forward(p, state) for p in self._critics]
        return [
            np.mean([heads[i] for heads in per_critic], axis=0, dtype=np.float64)
            for i in range(self._n_dims)
        ]


def _load_checkpoint(path) -> tuple[list[dict[str, np.ndarray]], dict]:
    flat, meta = load_params(path)
    critics: list[dict[str, np.ndarray]] = [{} for _ in range(int(meta["K"]))]
    for key, arr in flat.items():
        prefix, name = key.split("_", 1)
        critics[int(prefix.removeprefix("critic"))][name] = arr
    return critics, meta


def run_eval(checkpoint, config: RunConfig, episodes: int, seed: int) -> int:
    """Print the checkpoint's mean greedy return on the configured env."""
    critics, meta = _load_checkpoint(checkpoint)
    env = build_env(config.env, seed)
    if tuple(meta["sizes"]) != env.spec.sizes:
        raise ValueError(
            f"checkpoint action space {meta['sizes']} does not match env {list(env.spec.sizes)}"
        )
    policy = _CheckpointPolicy(critics, env.spec.dims)
    mean_return = evaluate(policy, env, episodes)
    print(f"eval_return {mean_return}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="decq",
        description="Decomposed Q-learning experiments: training, target theory, credit study.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", type=Path, default=None, help="YAML run config")
        p.add_argument("--seed", type=int, default=None, help="override the configured seed(s)")
        p.add_argument("--out", type=Path, default=None, help="override the output directory")

    add_common(sub.add_parser("train", help="train an agent per seed, logging CSVs"))
    add_common(sub.add_parser("theory", help="closed-form vs Monte Carlo target moments"))
    add_common(sub.add_parser("tabular-credit", help="single-state credit-assignment study"))
    p_eval = sub.add_parser("eval", help="mean greedy return of a checkpoint")
    p_eval.add_argument("checkpoint", type=Path)
    add_common(p_eval)
    p_eval.add_argument("--episodes", type=int, default=None)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = load_config(args.config) if args.config is not None else RunConfig()
        if args.seed is not None:
            config = replace(
                config,
                seeds=(args.seed,),
                theory=replace(config.theory, seed=args.seed),
                tabular_credit=replace(config.tabular_credit, seed=args.seed),
            )
        if args.command == "train":
            return run_train(config, args.out)
        if args.command == "theory":
            return run_theory(config, args.out)
        if args.command == "tabular-credit":
            return run_tabular_credit(config, args.out)
        episodes = args.episodes if args.episodes is not None else config.training.eval_episodes
        seed = args.seed if args.seed is not None else config.seeds[0]
        return run_eval(args.checkpoint, config, episodes, seed)
    except (ValueError, OSError, KeyError, yaml.YAMLError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
