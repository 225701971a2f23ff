"""Synchronous decentralized optimizers over a simulated worker ensemble.

Iterates are kept as ``(n, dim)`` arrays whose row ``i`` is worker ``i``'s
local model. One call to a step function is one synchronous round: every
worker computes on its own shard, then all workers gossip through the mixing
matrix.

Implemented methods:

``dspider``
    Decentralized SPIDER: a recursive gradient estimator that is reset from an
    ``s1``-sample batch every ``q`` rounds and otherwise updated with a
    gradient difference evaluated on one ``s2``-sample batch at the current and
    previous local iterates. The local half-step
    ``2 x_k - x_{k-1} - eta * (g_k - g_{k-1})`` is then gossiped.
``dpsgd``
    ``X_{k+1} = X_k W - eta * G_k`` with fresh ``s2``-sample gradients.
``d2``
    ``X_{k+1} = [2 X_k - X_{k-1} - eta * (G_k - G_{k-1})] W`` with fresh
    batches every round.
``cspider``
    Centralized fixed-step SPIDER on one shared iterate; each round pools the
    per-worker batches as a parameter server would.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import CalledBeforeFirstStep, DimensionMismatch
from .rng import SAMPLING_MODES, Sampler
from .topology import MixingMatrix

__all__ = [
    "ALGORITHMS",
    "AlgoConfig",
    "WorkerState",
    "EnsembleState",
    "init_ensemble",
    "dspider_step",
    "dpsgd_step",
    "d2_step",
    "cspider_step",
    "step",
    "estimator_vector",
    "is_restart",
]

ALGORITHMS = ("dspider", "dpsgd", "d2", "cspider")


@dataclass(frozen=True)
class AlgoConfig:
    """Optimizer settings.

    For ``dpsgd`` and ``d2`` the fields ``q`` and ``s1`` are ignored and ``s2``
    is the minibatch size.
    """

    algorithm: str
    topology: MixingMatrix
    eta: float
    q: int = 16
    s1: int = 256
    s2: int = 16
    seed: int = 0
    sampling: str = "replace"

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; expected one of {ALGORITHMS}")
        if not self.eta > 0:
            raise ValueError(f"eta must be > 0, got {self.eta}")
        for name in ("q", "s1", "s2"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.sampling not in SAMPLING_MODES:
            raise ValueError(f"unknown sampling mode {self.sampling!r}")

    @property
    def n(self) -> int:
        return self.topology.n

    def sampler(self) -> Sampler:
        return Sampler(self.seed, self.sampling)


@dataclass(frozen=True)
class WorkerState:
    x_curr: np.ndarray
    x_prev: np.ndarray
    g_prev: np.ndarray
    shard: object


@dataclass(frozen=True)
class EnsembleState:
    """All worker states after ``iter`` rounds.

    ``x``, ``x_prev`` and ``g_prev`` are ``(rows, dim)`` arrays; ``rows`` is
    the worker count, or 1 for ``cspider``'s shared iterate. ``g_prev`` holds
    the most recent gradient estimator (or stochastic gradient for
    ``dpsgd``/``d2``).
    """

    x: np.ndarray
    x_prev: np.ndarray
    g_prev: np.ndarray
    shards: tuple
    iter: int = 0
    grad_eval_count: int = 0
    paper_cost_count: int = 0
    mean_direction: np.ndarray | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return len(self.shards)

    @property
    def workers(self) -> list[WorkerState]:
        rows = self.x.shape[0]
        return [
            WorkerState(self.x[i % rows], self.x_prev[i % rows], self.g_prev[i % rows], s)
            for i, s in enumerate(self.shards)
        ]

    @property
    def mean_iterate(self) -> np.ndarray:
        return self.x.mean(axis=0)

    @property
    def consensus_error(self) -> float:
        dev = self.x - self.x.mean(axis=0)
        return float(np.sum(dev * dev))


def init_ensemble(obj, shards, config: AlgoConfig, x0=None) -> EnsembleState:
    """Start every worker at ``x0`` (zeros by default) with ``X_{-1} = X_0`` and ``G_{-1} = 0``."""
    shards = tuple(shards)
    if len(shards) != config.n:
        raise DimensionMismatch(f"{len(shards)} shards for a topology of {config.n} workers")
    x0 = np.zeros(obj.dim) if x0 is None else np.asarray(x0, dtype=float)
    if x0.shape != (obj.dim,):
        raise DimensionMismatch(f"x0 has shape {x0.shape}, objective dim is {obj.dim}")
    if config.sampling == "noreplace":
        smallest = min(s.local_sample_count for s in shards)
        need = config.s2 if config.algorithm in ("dpsgd", "d2") else max(config.s1, config.s2)
        if need > smallest:
            raise ValueError(f"batch size {need} exceeds smallest shard ({smallest})")
    rows = 1 if config.algorithm == "cspider" else len(shards)
    x = np.tile(x0, (rows, 1))
    return EnsembleState(
        x=x, x_prev=x.copy(), g_prev=np.zeros_like(x), shards=shards, iter=0
    )


def is_restart(k: int, q: int) -> bool:
    return k % q == 0


def _map(fn, n, pool):
    if pool is None:
        return [fn(i) for i in range(n)]
    return list(pool.map(fn, range(n)))


def _half_step(x, x_prev, eta, delta):
    return 2.0 * x - x_prev - eta * delta


def _advance(state, x_new, g_new, config, raw, paper):
    direction = (state.x.mean(axis=0) - x_new.mean(axis=0)) / config.eta
    return replace(
        state,
        x=x_new,
        x_prev=state.x,
        g_prev=g_new,
        iter=state.iter + 1,
        grad_eval_count=state.grad_eval_count + raw,
        paper_cost_count=state.paper_cost_count + paper,
        mean_direction=direction,
    )


def _spider_local(obj, state, config, sampler, i, x, x_prev):
    """One worker's estimator input for round ``k``.

    Returns ``(kind, vector, batch_len)`` where kind is ``"reset"`` with the
    large-batch gradient at ``x``, or ``"diff"`` with the same-batch gradient
    difference between ``x`` and ``x_prev``.
    """
    k = state.iter
    shard = state.shards[i]
    if is_restart(k, config.q):
        batch = sampler.draw(shard, i, k, config.s1)
        return "reset", obj.batch_grad(x, batch), len(batch)
    batch = sampler.draw(shard, i, k, config.s2)
    diff = obj.batch_grad(x, batch) - obj.batch_grad(x_prev, batch)
    return "diff", diff, len(batch)


def dspider_step(state: EnsembleState, obj, config: AlgoConfig, sampler=None, pool=None):
    sampler = sampler or config.sampler()
    W = config.topology

    def work(i):
        x, xp, gp = state.x[i], state.x_prev[i], state.g_prev[i]
        kind, vec, b = _spider_local(obj, state, config, sampler, i, x, xp)
        if kind == "reset":
            g = vec
            half = _half_step(x, xp, config.eta, g - gp)
        else:
            g = vec + gp
            half = _half_step(x, xp, config.eta, vec)
        return half, g, b

    out = _map(work, state.n, pool)
    half = np.array([o[0] for o in out])
    g = np.array([o[1] for o in out])
    b = sum(o[2] for o in out)
    restart = is_restart(state.iter, config.q)
    raw = b if restart else 2 * b
    return _advance(state, W.gossip(half), g, config, raw, b)


def dpsgd_step(state: EnsembleState, obj, config: AlgoConfig, sampler=None, pool=None):
    sampler = sampler or config.sampler()
    k = state.iter

    def work(i):
        batch = sampler.draw(state.shards[i], i, k, config.s2)
        return obj.batch_grad(state.x[i], batch), len(batch)

    out = _map(work, state.n, pool)
    g = np.array([o[0] for o in out])
    b = sum(o[1] for o in out)
    x_new = config.topology.gossip(state.x) - config.eta * g
    return _advance(state, x_new, g, config, b, b)


def d2_step(state: EnsembleState, obj, config: AlgoConfig, sampler=None, pool=None):
    sampler = sampler or config.sampler()
    k = state.iter

    def work(i):
        batch = sampler.draw(state.shards[i], i, k, config.s2)
        return obj.batch_grad(state.x[i], batch), len(batch)

    out = _map(work, state.n, pool)
    g = np.array([o[0] for o in out])
    b = sum(o[1] for o in out)
    # at k = 0 this is (X_0 - eta G_0) W since X_{-1} = X_0 and G_{-1} = 0
    half = _half_step(state.x, state.x_prev, config.eta, g - state.g_prev)
    return _advance(state, config.topology.gossip(half), g, config, b, b)


def cspider_step(state: EnsembleState, obj, config: AlgoConfig, sampler=None, pool=None):
    """Centralized fixed-step SPIDER.

    The shared iterate moves by ``-eta * v_k``. It is written in the two-point
    form ``x_{k+1} = 2 x_k - x_{k-1} - eta * (v_k - v_{k-1})``, which is the
    same recursion (``x_k - x_{k-1} = -eta * v_{k-1}``) and keeps the
    floating-point operations identical to ``dspider`` on a single worker.
    """
    sampler = sampler or config.sampler()
    x, xp, vp = state.x[0], state.x_prev[0], state.g_prev[0]

    def work(i):
        return _spider_local(obj, state, config, sampler, i, x, xp)

    out = _map(work, state.n, pool)
    pooled = np.mean([o[1] for o in out], axis=0)
    b = sum(o[2] for o in out)
    if out[0][0] == "reset":
        v = pooled
        x_new = _half_step(x, xp, config.eta, v - vp)
        raw = b
    else:
        v = pooled + vp
        x_new = _half_step(x, xp, config.eta, pooled)
        raw = 2 * b
    return _advance(state, x_new[None, :], v[None, :], config, raw, b)


_STEPS = {
    "dspider": dspider_step,
    "dpsgd": dpsgd_step,
    "d2": d2_step,
    "cspider": cspider_step,
}


def step(state: EnsembleState, obj, config: AlgoConfig, sampler=None, pool=None):
    """Advance one synchronous round with the configured algorithm."""
    return _STEPS[config.algorithm](state, obj, config, sampler, pool)


def estimator_vector(state: EnsembleState):
    """Per-worker estimators ``g_{k,i}`` and the realized mean update direction.

    The direction is ``(mean(X_{k-1}) - mean(X_k)) / eta`` for the last round.
    """
    if state.iter == 0 or state.mean_direction is None:
        raise CalledBeforeFirstStep("no step has been taken yet")
    return state.g_prev, state.mean_direction
