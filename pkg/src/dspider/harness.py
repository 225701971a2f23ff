"""Deterministic experiment driver: iteration loop, metrics and CSV output."""

from __future__ import annotations

import contextlib
import hashlib
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import problems, theory
from .algorithms import AlgoConfig, estimator_vector, init_ensemble, step
from .errors import EmptyWindow, NonFiniteIterate
from .topology import MixingMatrix, build_complete, build_ring

__all__ = [
    "CSV_COLUMNS",
    "MetricRow",
    "RunRecord",
    "run",
    "mean_grad_norm",
    "cost_to_threshold",
    "sweep",
    "write_csv",
    "default_threads",
]

CSV_COLUMNS = (
    "iter",
    "grad_norm_mean",
    "consensus_err",
    "loss_mean",
    "cum_raw_evals",
    "cum_paper_cost",
    "wall_ms",
)


@dataclass(frozen=True)
class MetricRow:
    iter: int
    grad_norm_mean: float
    consensus_err: float
    loss_mean: float
    cum_raw_evals: int
    cum_paper_cost: int
    wall_ms: float = 0.0
    estimator_err: float = float("nan")


@dataclass
class RunRecord:
    """Metrics of one run plus the resolved configuration.

    Cost columns are per-ensemble totals; divide by the worker count for
    per-worker figures.
    """

    config: dict
    rows: list[MetricRow] = field(default_factory=list)
    x_final: np.ndarray | None = None
    status: str = "ok"
    tag: object = None

    @property
    def run_id(self) -> str:
        blob = json.dumps(self.config, sort_keys=True, default=str).encode()
        return hashlib.sha1(blob).hexdigest()[:12]

    @property
    def n(self) -> int:
        return int(self.config["n"])

    def column(self, name):
        return np.array([getattr(r, name) for r in self.rows])


def default_threads() -> int:
    env = os.environ.get("DESPIDER_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _describe(config: AlgoConfig, K, eval_stride, x0) -> dict:
    return {
        "algorithm": config.algorithm,
        "n": config.n,
        "eta": config.eta,
        "q": config.q,
        "s1": config.s1,
        "s2": config.s2,
        "seed": config.seed,
        "sampling": config.sampling,
        "lambda2": config.topology.lambda2,
        "lambda_n": config.topology.lambda_n,
        "K": K,
        "eval_stride": eval_stride,
        "x0_norm": float(np.linalg.norm(x0)) if x0 is not None else 0.0,
    }


def _metrics(obj, shards, state, t0, timing):
    xbar = state.mean_iterate
    local = np.array([obj.batch_grad(xbar, s.indices) for s in shards])
    grad = local.mean(axis=0)
    est_err = float("nan")
    if state.iter > 0:
        g, _ = estimator_vector(state)
        workers = state.workers
        truth = np.mean([obj.batch_grad(w.x_curr, w.shard.indices) for w in workers], axis=0)
        est_err = float(np.linalg.norm(g.mean(axis=0) - truth))
    return MetricRow(
        iter=state.iter,
        grad_norm_mean=float(np.linalg.norm(grad)),
        consensus_err=state.consensus_error,
        loss_mean=problems.global_value(obj, shards, xbar),
        cum_raw_evals=state.grad_eval_count,
        cum_paper_cost=state.paper_cost_count,
        wall_ms=(time.perf_counter() - t0) * 1e3 if timing else 0.0,
        estimator_err=est_err,
    )


def run(
    obj,
    shards,
    config: AlgoConfig,
    x0=None,
    K: int = 100,
    eval_stride: int = 10,
    threads: int = 1,
    timing: bool = False,
    diagnostics: bool = True,
    callback=None,
    stop_below: float | None = None,
) -> RunRecord:
    """Run ``K`` rounds of the configured algorithm.

    Metrics are taken at iteration 0, every ``eval_stride`` rounds and at
    ``K``. They use exact full gradients at the mean iterate and are not
    charged to the cost counters. ``wall_ms`` is only measured with
    ``timing=True``, so records are reproducible byte for byte by default.
    ``callback(state)`` is invoked after every round. With ``stop_below``
    the run ends at the first metric row whose gradient norm is at or below
    that value.

    Raises:
        NonFiniteIterate: an iterate coordinate became NaN or inf; the partial
            record is attached to the exception.
    """
    if K < 1 or eval_stride < 1:
        raise ValueError("K and eval_stride must be >= 1")
    state = init_ensemble(obj, shards, config, x0)
    record = RunRecord(config=_describe(config, K, eval_stride, x0))
    sampler = config.sampler()
    t0 = time.perf_counter()
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    # overflow on the way to divergence is reported by the finiteness check
    with contextlib.ExitStack() as stack:
        stack.enter_context(np.errstate(over="ignore", invalid="ignore"))
        if pool is not None:
            stack.callback(pool.shutdown)
        if diagnostics:
            record.rows.append(_metrics(obj, shards, state, t0, timing))
        for _ in range(K):
            state = step(state, obj, config, sampler, pool)
            if callback is not None:
                callback(state)
            if not np.all(np.isfinite(state.x)):
                record.status = "diverged"
                raise NonFiniteIterate(
                    f"non-finite iterate at iteration {state.iter}", record=record
                )
            if diagnostics and (state.iter % eval_stride == 0 or state.iter == K):
                record.rows.append(_metrics(obj, shards, state, t0, timing))
                if stop_below is not None and record.rows[-1].grad_norm_mean <= stop_below:
                    break
    record.x_final = state.mean_iterate
    return record


def mean_grad_norm(record: RunRecord, from_iter: int = 0, to_iter: int | None = None) -> float:
    """Mean squared gradient norm over metric rows with ``from_iter <= iter <= to_iter``."""
    hi = math.inf if to_iter is None else to_iter
    vals = [r.grad_norm_mean**2 for r in record.rows if from_iter <= r.iter <= hi]
    if not vals:
        raise EmptyWindow(f"no metric rows in [{from_iter}, {to_iter}]")
    return float(np.mean(vals))


def cost_to_threshold(record: RunRecord, threshold: float):
    """Cumulative ``(raw_evals, paper_cost)`` at the first row with gradient norm <= threshold.

    Returns ``None`` if the threshold is never reached.
    """
    for r in record.rows:
        if r.grad_norm_mean <= threshold:
            return r.cum_raw_evals, r.cum_paper_cost
    return None


def _topology(value, n):
    if isinstance(value, MixingMatrix):
        return value
    if value == "ring":
        return build_ring(n)
    if value == "complete":
        return build_complete(n)
    raise ValueError(f"unknown topology {value!r}")


SWEEP_AXES = ("eta", "epsilon", "topology", "mode", "algorithm")


def sweep(
    obj,
    shards,
    base: AlgoConfig,
    axis: str,
    values,
    x0=None,
    K: int = 100,
    eval_stride: int = 10,
    sigma: float | None = None,
    partition_seed: int = 0,
    threads: int = 1,
) -> list[RunRecord]:
    """One run per value of ``axis``, all sharing ``base.seed``.

    ``epsilon`` values set ``(s1, s2, q)`` from the accuracy schedule using
    ``sigma`` (estimated from the partition when omitted). ``mode`` values
    re-partition the data.
    """
    values = list(values)
    if not values:
        raise ValueError("sweep needs at least one value")
    if axis not in SWEEP_AXES:
        raise ValueError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")
    records = []
    for v in values:
        cfg, sh = base, shards
        if axis == "eta":
            cfg = replace(base, eta=float(v))
        elif axis == "algorithm":
            cfg = replace(base, algorithm=v)
        elif axis == "topology":
            cfg = replace(base, topology=_topology(v, base.n))
        elif axis == "mode":
            sh = problems.partition(obj, base.n, v, partition_seed)
        elif axis == "epsilon":
            if sigma is None:
                sigma = problems.heterogeneity(obj, shards).sigma_estimate
            s1, s2, q = theory.schedule(sigma, float(v))
            cfg = replace(base, s1=s1, s2=s2, q=q)
        rec = run(obj, sh, cfg, x0, K, eval_stride, threads=threads)
        rec.tag = (axis, v)
        records.append(rec)
    return records


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"


def write_csv(record: RunRecord, path) -> None:
    lines = [",".join(CSV_COLUMNS)]
    for r in record.rows:
        lines.append(",".join(_fmt(getattr(r, c)) for c in CSV_COLUMNS))
    Path(path).write_text("\n".join(lines) + "\n")
