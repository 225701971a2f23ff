"""Counter-based random substreams.

Every random draw is keyed by ``(seed, domain, worker, iteration, draw)`` and
served by a fresh Philox generator, so the indices a worker samples never
depend on how many draws other workers made or in what order workers run.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["SAMPLING", "DIAGNOSTICS", "RngContract", "Sampler"]

SAMPLING = 0
DIAGNOSTICS = 1

SAMPLING_MODES = ("replace", "noreplace", "full")


@dataclass(frozen=True)
class RngContract:
    master_seed: int

    def generator(self, worker: int, iteration: int, draw: int = 0, domain: int = SAMPLING):
        ss = np.random.SeedSequence(
            entropy=self.master_seed, spawn_key=(domain, worker, iteration, draw)
        )
        return np.random.Generator(np.random.Philox(ss))


class Sampler:
    """Draws minibatch indices from a worker's shard.

    ``mode`` is ``"replace"`` (uniform with replacement, the default),
    ``"noreplace"`` (uniform without replacement; the batch must fit in the
    shard) or ``"full"`` (the whole shard in index order, ignoring ``size``).
    """

    def __init__(self, seed: int, mode: str = "replace"):
        if mode not in SAMPLING_MODES:
            raise ValueError(f"unknown sampling mode {mode!r}; expected one of {SAMPLING_MODES}")
        self.contract = RngContract(seed)
        self.mode = mode

    def draw(self, shard, worker: int, iteration: int, size: int, draw: int = 0):
        idx = shard.indices
        if self.mode == "full":
            return np.asarray(idx)
        rng = self.contract.generator(worker, iteration, draw)
        if self.mode == "replace":
            return idx[rng.integers(0, len(idx), size=size)]
        if size > len(idx):
            raise ValueError(
                f"batch of {size} exceeds shard {shard.worker_id} size {len(idx)} "
                "when sampling without replacement"
            )
        return idx[rng.choice(len(idx), size=size, replace=False)]
