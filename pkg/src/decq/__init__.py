"""Value-decomposition Q-learning for factorisable action spaces.

The package splits into core action-space types (:mod:`decq.core`),
target bias/variance analysis (:mod:`decq.theory`), a manual-gradient
utility network (:mod:`decq.net`), n-step prioritized replay
(:mod:`decq.replay`), desk-scale environments (:mod:`decq.envs`), the
learning algorithms (:mod:`decq.agents`), evaluation and stability
metrics (:mod:`decq.metrics`), and the config/CLI experiment runner
(:mod:`decq.config`, :mod:`decq.cli`).
"""

from decq.agents import AgentConfig, NeuralAgent, TabularUtilities
from decq.core import ActionSpaceSpec, GlobalAction, Transition, global_q, joint_argmax
from decq.theory import (
    NoiseModel,
    closed_form_target_moments,
    max_uniform_moments,
    simulate_target_diff,
    verify_inequalities,
)

__all__ = [
    "ActionSpaceSpec",
    "GlobalAction",
    "Transition",
    "global_q",
    "joint_argmax",
    "AgentConfig",
    "NeuralAgent",
    "TabularUtilities",
    "NoiseModel",
    "max_uniform_moments",
    "closed_form_target_moments",
    "simulate_target_diff",
    "verify_inequalities",
]

__version__ = "0.1.0"
