"""Capacitated arc routing toolkit.

Core pieces: instance/shortest-path/solution handling, the edge-to-arc
graph transformation with its selection environment, an attention policy
trained by supervised pre-training plus PPO fine-tuning, a DP depot-return
optimizer with dual beam decoding, path-scanning baselines, exact and
local-search teachers, a synthetic instance generator and a benchmark
harness.
"""

from .arcgraph import ArcGraph, EnvState, initial_state, legal_actions, step, transform
from .instance import (
    DistanceMatrix,
    Edge,
    Instance,
    Solution,
    all_pairs_shortest_paths,
    evaluate_solution,
    validate_instance,
)
from .model import ModelConfig, PolicyParams, init_params, prepare_instance, rollout
from .pathopt import ServiceOrder, dp_split, dual_beam_decode

__all__ = [
    "ArcGraph",
    "DistanceMatrix",
    "Edge",
    "EnvState",
    "Instance",
    "ModelConfig",
    "PolicyParams",
    "ServiceOrder",
    "Solution",
    "all_pairs_shortest_paths",
    "dp_split",
    "dual_beam_decode",
    "evaluate_solution",
    "init_params",
    "initial_state",
    "legal_actions",
    "prepare_instance",
    "rollout",
    "step",
    "transform",
    "validate_instance",
]
