"""Run configuration: YAML sections for env, agent, training, and studies.

A config file is a mapping with optional sections; unknown keys anywhere
are rejected with the offending field named.  Parsing normalises lists to
tuples and resolves algorithm-dependent defaults, so parse -> serialize
-> parse is a fixed point.
"""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, fields
from typing import Any, Mapping

import yaml

from decq.agents import WEIGHT_FNS, AgentConfig

__all__ = [
    "EnvConfig",
    "TrainingConfig",
    "TheoryConfig",
    "CreditExperimentConfig",
    "RunConfig",
    "load_config",
    "dump_config",
    "config_from_dict",
    "config_to_dict",
    "config_hash",
]


@dataclass(frozen=True)
class EnvConfig:
    """Which environment to build and with what parameters.

    ``bins``/``step_scale``/``horizon``/``target`` apply to point_mass,
    ``n`` to tabular_credit; the noise sigmas wrap either.
    """

    name: str = "point_mass"
    N: int = 6
    bins: int = 3
    n: int = 10
    step_scale: float = 0.1
    horizon: int = 50
    target: tuple[float, ...] | None = None
    reward_sigma: float = 0.0
    state_sigma: float = 0.0

    def __post_init__(self) -> None:
        if self.name not in ("point_mass", "tabular_credit"):
            raise ValueError(
                f"env.name: unknown environment {self.name!r}, "
                "expected 'point_mass' or 'tabular_credit'"
            )
        if self.target is not None:
            object.__setattr__(self, "target", tuple(float(x) for x in self.target))
        if self.reward_sigma < 0 or self.state_sigma < 0:
            raise ValueError("env noise sigmas must be non-negative")


@dataclass(frozen=True)
class TrainingConfig:
    """Loop lengths and evaluation cadence for the train subcommand."""

    total_updates: int = 100_000
    steps_per_update: int = 5
    warmup_steps: int = 1000
    eval_every: int = 1000
    eval_episodes: int = 1

    def __post_init__(self) -> None:
        if self.total_updates < 1 or self.steps_per_update < 1:
            raise ValueError("training.total_updates and steps_per_update must be >= 1")
        if self.warmup_steps < 0:
            raise ValueError("training.warmup_steps must be >= 0")
        if self.eval_every < 1 or self.eval_episodes < 1:
            raise ValueError("training.eval_every and eval_episodes must be >= 1")


@dataclass(frozen=True)
class TheoryConfig:
    """Grid and sampling effort for the theory subcommand."""

    specs: tuple[tuple[int, ...], ...] = (
        (2,), (3,), (5,), (3, 3), (2, 4), (5, 5), (3, 3, 3), (2, 3, 4),
    )
    b: float = 1.0
    gamma: float = 0.99
    K: int = 10
    trials: int = 100_000
    seed: int = 0

    def __post_init__(self) -> None:
        if len(self.specs) == 0:
            raise ValueError("theory.specs must list at least one factorisation")
        object.__setattr__(
            self, "specs", tuple(tuple(int(n) for n in sizes) for sizes in self.specs)
        )
        if self.K < 1:
            raise ValueError("theory.K must be >= 1")


@dataclass(frozen=True)
class CreditExperimentConfig:
    """Protocol for the single-state credit-assignment study.

    Every trial draws fresh utilities in [init_low, init_high], pins the
    last dimension's optimal sub-action to ``optimal_value``, then runs
    epsilon-greedy selection and one learning update per step, tracking
    how often the last dimension picks its optimal sub-action.
    """

    N: int = 5
    n: int = 10
    trials: int = 1000
    updates: int = 100
    alpha: float = 0.1
    beta: float = 0.5
    c_tab: float = 0.05
    epsilon: float = 0.1
    weight_fn: str = "exponential"
    algorithms: tuple[str, ...] = ("decqn", "revalued")
    init_low: float = -0.1
    init_high: float = 0.1
    optimal_value: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.N < 1 or self.n < 2:
            raise ValueError("tabular_credit.N must be >= 1 and n >= 2")
        if self.trials < 1 or self.updates < 1:
            raise ValueError("tabular_credit.trials and updates must be >= 1")
        if not 0 <= self.epsilon <= 1:
            raise ValueError("tabular_credit.epsilon must lie in [0, 1]")
        if self.weight_fn not in WEIGHT_FNS:
            raise ValueError(f"tabular_credit.weight_fn: unknown kind {self.weight_fn!r}")
        object.__setattr__(self, "algorithms", tuple(self.algorithms))
        for algo in self.algorithms:
            if algo not in ("decqn", "revalued"):
                raise ValueError(
                    f"tabular_credit.algorithms: {algo!r} unsupported, "
                    "the tabular update implements 'decqn' and 'revalued'"
                )


@dataclass(frozen=True)
class RunConfig:
    """Everything one invocation needs, across all subcommands."""

    env: EnvConfig = EnvConfig()
    agent: AgentConfig = AgentConfig()
    training: TrainingConfig = TrainingConfig()
    theory: TheoryConfig = TheoryConfig()
    tabular_credit: CreditExperimentConfig = CreditExperimentConfig()
    seeds: tuple[int, ...] = (0,)
    out_dir: str = "runs"

    def __post_init__(self) -> None:
        if len(self.seeds) == 0:
            raise ValueError("seeds must list at least one seed")
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))


_SECTIONS = {
    "env": EnvConfig,
    "agent": AgentConfig,
    "training": TrainingConfig,
    "theory": TheoryConfig,
    "tabular_credit": CreditExperimentConfig,
}


def _build_section(cls, data: Mapping[str, Any], section: str):
    known = {f.name for f in fields(cls)}
    for key in data:
        if key not in known:
            raise ValueError(f"unknown field '{section}.{key}'")
    kwargs = dict(data)
    for name in ("specs", "algorithms", "target", "seeds"):
        if kwargs.get(name) is not None and name in known:
            value = kwargs[name]
            if name == "specs":
                kwargs[name] = tuple(tuple(v) for v in value)
            else:
                kwargs[name] = tuple(value)
    return cls(**kwargs)


def config_from_dict(data: Mapping[str, Any] | None) -> RunConfig:
    """Validate a parsed mapping into a RunConfig, naming any bad field."""
    data = dict(data or {})
    kwargs: dict[str, Any] = {}
    for key, value in data.items():
        if key in _SECTIONS:
            if value is None:
                continue
            if not isinstance(value, Mapping):
                raise ValueError(f"section '{key}' must be a mapping")
            kwargs[key] = _build_section(_SECTIONS[key], value, key)
        elif key == "seeds":
            kwargs["seeds"] = tuple(int(s) for s in value)
        elif key == "out_dir":
            kwargs["out_dir"] = str(value)
        else:
            raise ValueError(f"unknown field '{key}'")
    return RunConfig(**kwargs)


def config_to_dict(config: RunConfig) -> dict[str, Any]:
    """Plain nested dict with YAML-friendly lists, inverse of from_dict."""
    out: dict[str, Any] = {}
    for name, section in (
        ("env", config.env),
        ("agent", config.agent),
        ("training", config.training),
        ("theory", config.theory),
        ("tabular_credit", config.tabular_credit),
    ):
        d = asdict(section)
        for key, value in d.items():
            if isinstance(value, tuple):
                d[key] = [list(v) if isinstance(v, tuple) else v for v in value]
        out[name] = d
    out["seeds"] = list(config.seeds)
    out["out_dir"] = config.out_dir
    return out


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if data is not None and not isinstance(data, Mapping):
        raise ValueError("config file must contain a mapping at top level")
    return config_from_dict(data)


def dump_config(config: RunConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(config_to_dict(config), fh, sort_keys=True)


def config_hash(config: RunConfig) -> str:
    """Short stable digest of the fully resolved configuration."""
    canonical = yaml.safe_dump(config_to_dict(config), sort_keys=True)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]
