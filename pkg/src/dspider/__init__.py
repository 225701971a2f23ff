"""Decentralized SPIDER-SFO and baseline optimizers on a simulated gossip network."""

from .algorithms import ALGORITHMS, AlgoConfig, EnsembleState, init_ensemble, step
from .harness import RunRecord, cost_to_threshold, mean_grad_norm, run, sweep
from .problems import Objective, Shard, make_synthetic, partition
from .topology import MixingMatrix, build_complete, build_ring, validate

__version__ = "0.1.0"

__all__ = [
    "ALGORITHMS",
    "AlgoConfig",
    "EnsembleState",
    "init_ensemble",
    "step",
    "RunRecord",
    "cost_to_threshold",
    "mean_grad_norm",
    "run",
    "sweep",
    "Objective",
    "Shard",
    "make_synthetic",
    "partition",
    "MixingMatrix",
    "build_complete",
    "build_ring",
    "validate",
]
