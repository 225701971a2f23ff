"""Finite-sum objectives, per-sample gradient oracles and worker shards.

Two objective kinds are provided:

* ``nonconvex-logistic``: ``log(1 + exp(-y a.x)) + alpha * sum_j x_j^2 / (1 + x_j^2)``
  with labels ``y`` in {-1, +1};
* ``least-squares``: ``(a.x - y)^2 / 2``.

The global objective over ``n`` workers is the unweighted mean of the worker
objectives, each of which is the mean over its shard.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    EmptyBatch,
    IndexOutOfRange,
    InvalidDimension,
    MissingLabels,
    TooManyWorkers,
)

__all__ = [
    "KINDS",
    "Objective",
    "Shard",
    "HeterogeneityReport",
    "make_synthetic",
    "load_csv",
    "per_sample_grad",
    "minibatch_grad",
    "shard_grad",
    "global_grad",
    "global_value",
    "partition",
    "replicate",
    "heterogeneity",
]

LOGISTIC = "nonconvex-logistic"
LEAST_SQUARES = "least-squares"
KINDS = (LOGISTIC, LEAST_SQUARES)


def _log1pexp(z):
    return np.logaddexp(0.0, z)


def _sigmoid(z):
    # numerically safe 1 / (1 + exp(-z))
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass(frozen=True, eq=False)
class Objective:
    """A finite-sum problem ``f(x) = mean_s F(x; s)`` over ``m`` samples.

    ``features`` is ``(m, dim)``, ``targets`` is ``(m,)``. For logistic
    problems ``targets`` doubles as the discrete label used by the
    unshuffled partition; least-squares problems carry no labels unless
    ``labels`` is given explicitly.
    """

    kind: str
    features: np.ndarray
    targets: np.ndarray
    reg_alpha: float = 0.0
    lipschitz_estimate: float = 1.0
    labels: np.ndarray | None = field(default=None, repr=False)
    planted: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown objective kind {self.kind!r}; expected one of {KINDS}")
        for arr in (self.features, self.targets, self.labels, self.planted):
            if arr is not None:
                arr.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def sample_count(self) -> int:
        return self.features.shape[0]

    # -- vectorized kernels (no argument checking) ---------------------------

    def sample_values(self, x, idx):
        a = self.features[idx]
        y = self.targets[idx]
        z = a @ x
        if self.kind == LOGISTIC:
            reg = self.reg_alpha * np.sum(x * x / (1.0 + x * x))
            return _log1pexp(-y * z) + reg
        return 0.5 * (z - y) ** 2

    def sample_grads(self, x, idx):
        """Per-sample gradients as a ``(len(idx), dim)`` array."""
        a = self.features[idx]
        y = self.targets[idx]
        z = a @ x
        if self.kind == LOGISTIC:
            coef = -y * _sigmoid(-y * z)
            reg = self.reg_alpha * 2.0 * x / (1.0 + x * x) ** 2
            return coef[:, None] * a + reg
        return (z - y)[:, None] * a

    def batch_grad(self, x, idx):
        """Mean gradient over the samples ``idx`` (duplicates count twice)."""
        idx = np.asarray(idx)
        a = self.features[idx]
        y = self.targets[idx]
        z = a @ x
        if self.kind == LOGISTIC:
            coef = -y * _sigmoid(-y * z)
            g = (coef @ a) / len(idx)
            return g + self.reg_alpha * 2.0 * x / (1.0 + x * x) ** 2
        return ((z - y) @ a) / len(idx)

    def batch_value(self, x, idx):
        return float(np.mean(self.sample_values(x, np.asarray(idx))))

    def full_grad(self, x):
        return self.batch_grad(np.asarray(x, dtype=float), np.arange(self.sample_count))

    def value(self, x):
        return self.batch_value(np.asarray(x, dtype=float), np.arange(self.sample_count))

    def stationary_point(self):
        """Exact minimizer for least-squares problems (via ``lstsq``)."""
        if self.kind != LEAST_SQUARES:
            raise ValueError("closed-form stationary point only exists for least-squares")
        sol, *_ = np.linalg.lstsq(self.features, self.targets, rcond=None)
        return sol


@dataclass(frozen=True)
class Shard:
    worker_id: int
    indices: np.ndarray

    def __post_init__(self):
        self.indices.setflags(write=False)

    @property
    def local_sample_count(self) -> int:
        return len(self.indices)


@dataclass(frozen=True)
class HeterogeneityReport:
    zeta0: float
    zeta_sup_estimate: float
    sigma_estimate: float


def _lipschitz(kind, a, reg_alpha):
    if kind == LOGISTIC:
        return 0.25 * float(np.max(np.sum(a * a, axis=1))) + 2.0 * reg_alpha
    # largest eigenvalue of the Hessian A^T A / m
    return float(np.linalg.eigvalsh(a.T @ a / a.shape[0])[-1])


def make_synthetic(
    kind: str,
    dim: int,
    m: int,
    seed: int = 0,
    reg_alpha: float = 0.1,
    noise: float | None = None,
) -> Objective:
    """Generate a synthetic problem.

    Logistic data has standard-normal features, labels from a planted random
    separator and a fraction ``noise`` (default 0.1) of flipped labels.
    Least-squares data has standard-normal features and targets
    ``a.x* + noise * N(0, 1)`` (default noise 0, so ``x*`` interpolates).
    """
    if dim < 1 or m < 1:
        raise InvalidDimension(f"dim and m must be >= 1, got dim={dim}, m={m}")
    if kind not in KINDS:
        raise ValueError(f"unknown objective kind {kind!r}; expected one of {KINDS}")
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((m, dim))
    x_star = rng.standard_normal(dim)
    if kind == LOGISTIC:
        flip = 0.1 if noise is None else noise
        y = np.where(a @ x_star >= 0.0, 1.0, -1.0)
        y[rng.random(m) < flip] *= -1.0
        return Objective(
            kind=kind,
            features=a,
            targets=y,
            reg_alpha=reg_alpha,
            lipschitz_estimate=_lipschitz(kind, a, reg_alpha),
            labels=y.copy(),
            planted=x_star,
        )
    std = 0.0 if noise is None else noise
    y = a @ x_star + std * rng.standard_normal(m)
    return Objective(
        kind=kind,
        features=a,
        targets=y,
        reg_alpha=0.0,
        lipschitz_estimate=_lipschitz(kind, a, 0.0),
        planted=x_star,
    )


def load_csv(path, kind: str = LOGISTIC, reg_alpha: float = 0.1) -> Objective:
    """Load ``label,feat_0,...,feat_{N-1}`` rows (header line required)."""
    with open(Path(path), newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or not header or header[0].strip() != "label":
            raise ValueError(f"{path}: expected a header starting with 'label'")
        rows = [[float(v) for v in row] for row in reader if row]
    if not rows:
        raise InvalidDimension(f"{path}: no data rows")
    data = np.asarray(rows)
    y, a = data[:, 0].copy(), data[:, 1:].copy()
    if a.shape[1] < 1:
        raise InvalidDimension(f"{path}: no feature columns")
    if kind == LOGISTIC and not np.all(np.isin(y, (-1.0, 1.0))):
        # map {0, 1} style labels onto {-1, +1}
        classes = np.unique(y)
        if len(classes) != 2:
            raise ValueError(f"{path}: logistic data needs exactly 2 label values, got {classes}")
        y = np.where(y == classes[1], 1.0, -1.0)
    labels = y.copy() if kind == LOGISTIC else None
    return Objective(
        kind=kind,
        features=a,
        targets=y,
        reg_alpha=reg_alpha if kind == LOGISTIC else 0.0,
        lipschitz_estimate=_lipschitz(kind, a, reg_alpha if kind == LOGISTIC else 0.0),
        labels=labels,
    )


def per_sample_grad(obj: Objective, x, idx: int):
    if not 0 <= idx < obj.sample_count:
        raise IndexOutOfRange(f"sample index {idx} outside [0, {obj.sample_count})")
    return obj.sample_grads(np.asarray(x, dtype=float), np.array([idx]))[0]


def minibatch_grad(obj: Objective, shard: Shard, x, batch):
    """Mean per-sample gradient over ``batch`` (indices into the objective)."""
    batch = np.asarray(batch, dtype=np.intp)
    if batch.size == 0:
        raise EmptyBatch("minibatch is empty")
    bad = ~np.isin(batch, shard.indices)
    if bad.any():
        raise IndexOutOfRange(
            f"batch index {int(batch[bad][0])} is not in shard {shard.worker_id}"
        )
    return obj.batch_grad(np.asarray(x, dtype=float), batch)


def shard_grad(obj: Objective, shard: Shard, x):
    """Local full gradient of the worker objective on ``shard``."""
    return obj.batch_grad(np.asarray(x, dtype=float), shard.indices)


def global_grad(obj: Objective, shards, x):
    """Gradient of the unweighted mean of the worker objectives."""
    x = np.asarray(x, dtype=float)
    return np.mean([obj.batch_grad(x, s.indices) for s in shards], axis=0)


def global_value(obj: Objective, shards, x) -> float:
    x = np.asarray(x, dtype=float)
    return float(np.mean([obj.batch_value(x, s.indices) for s in shards]))


def _blocks(order, n):
    return [Shard(worker_id=i, indices=np.sort(b)) for i, b in enumerate(np.array_split(order, n))]


def partition(obj: Objective, n: int, mode: str = "shuffled", seed: int = 0) -> list[Shard]:
    """Split the samples across ``n`` workers.

    ``shuffled``: random permutation cut into near-equal contiguous blocks.
    ``unshuffled``: samples sorted by label, then cut into blocks, so each
    worker sees as few classes as possible.
    """
    m = obj.sample_count
    if n < 1:
        raise ValueError(f"worker count must be >= 1, got {n}")
    if n > m:
        raise TooManyWorkers(f"{n} workers but only {m} samples")
    if mode == "shuffled":
        order = np.random.default_rng(seed).permutation(m)
    elif mode == "unshuffled":
        if obj.labels is None:
            raise MissingLabels("unshuffled partition needs discrete labels")
        order = np.argsort(obj.labels, kind="stable")
    else:
        raise ValueError(f"unknown partition mode {mode!r}")
    return _blocks(order, n)


def replicate(obj: Objective, n: int) -> tuple[Objective, list[Shard]]:
    """Tile the data ``n`` times and give each worker one full copy.

    Every worker objective then equals the original ``f``.
    """
    m = obj.sample_count
    tiled = Objective(
        kind=obj.kind,
        features=np.tile(obj.features, (n, 1)),
        targets=np.tile(obj.targets, n),
        reg_alpha=obj.reg_alpha,
        lipschitz_estimate=obj.lipschitz_estimate,
        labels=None if obj.labels is None else np.tile(obj.labels, n),
        planted=None if obj.planted is None else obj.planted.copy(),
    )
    shards = [Shard(worker_id=i, indices=np.arange(i * m, (i + 1) * m)) for i in range(n)]
    return tiled, shards


def heterogeneity(obj: Objective, shards, seed: int = 0, probes: int = 8) -> HeterogeneityReport:
    """Estimate the data-heterogeneity and noise constants of a partition.

    ``zeta0`` is exact: the mean distance of worker gradients from the global
    gradient at the origin. ``zeta_sup_estimate`` is the largest root-mean-square
    deviation over the origin and ``probes`` random points; ``sigma_estimate``
    the largest per-worker root-mean-square per-sample gradient deviation over
    the same points.
    """
    rng = np.random.default_rng(seed)
    points = [np.zeros(obj.dim)] + [rng.standard_normal(obj.dim) for _ in range(probes)]
    zeta0 = 0.0
    zeta_sup = 0.0
    sigma = 0.0
    for j, x in enumerate(points):
        local = np.array([obj.batch_grad(x, s.indices) for s in shards])
        dev = np.linalg.norm(local - local.mean(axis=0), axis=1)
        if j == 0:
            zeta0 = float(dev.mean())
        zeta_sup = max(zeta_sup, float(np.sqrt(np.mean(dev**2))))
        for s, g in zip(shards, local):
            per = obj.sample_grads(x, s.indices)
            sigma = max(sigma, float(np.sqrt(np.mean(np.sum((per - g) ** 2, axis=1)))))
    return HeterogeneityReport(zeta0=zeta0, zeta_sup_estimate=zeta_sup, sigma_estimate=sigma)
