"""Gossip mixing matrices and their spectra.

A mixing matrix ``W`` is a symmetric doubly-stochastic ``n x n`` matrix.
Multiplying the ``(n, dim)`` stack of worker iterates by ``W`` performs one
round of neighbour averaging. The convergence theory only needs two numbers
from the spectrum: the second-largest eigenvalue ``lambda2`` and the smallest
eigenvalue ``lambda_n``; admissibility requires ``lambda2 < 1`` and
``lambda_n > -1/3``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import NotDoublyStochastic, NotSymmetric, SpectralGapViolation

__all__ = [
    "MixingMatrix",
    "build_ring",
    "build_complete",
    "validate",
    "spectrum",
    "jacobi_eigvalsh",
    "load_matrix",
    "format_matrix",
]

USER_TOL = 1e-12
LAMBDA_N_FLOOR = -1.0 / 3.0


def jacobi_eigvalsh(a, tol=1e-12, max_sweeps=100):
    """Eigenvalues of a real symmetric matrix by cyclic Jacobi rotations.

    Sweeps over all off-diagonal pairs until the off-diagonal Frobenius norm
    drops below ``tol``. Returns the eigenvalues in descending order.
    """
    a = np.array(a, dtype=float, copy=True)
    n = a.shape[0]
    if n == 1:
        return a.diagonal().copy()

    offdiag = ~np.eye(n, dtype=bool)

    def off_norm(m):
        return np.sqrt(np.sum(m[offdiag] ** 2))

    for _ in range(max_sweeps):
        if off_norm(a) < tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if theta == 0.0:
                    t = 1.0
                elif abs(theta) > 1e150:
                    # theta^2 would overflow; t ~ 1 / (2 theta)
                    t = 0.5 / theta
                else:
                    t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                # A <- J^T A J with J the (p, q) Givens rotation
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap = a[p, :].copy()
                aq = a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                a[p, q] = a[q, p] = 0.0
    else:
        raise RuntimeError("Jacobi eigensolver did not converge")
    return np.sort(np.diag(a))[::-1].copy()


@dataclass(frozen=True)
class MixingMatrix:
    """A validated gossip matrix with its cached spectrum.

    Attributes:
        entries: read-only ``(n, n)`` array of weights.
        eigenvalues: all eigenvalues, descending.
        lambda2: second-largest eigenvalue (1.0 by convention when n == 1).
        lambda_n: smallest eigenvalue (1.0 by convention when n == 1).
    """

    entries: np.ndarray
    eigenvalues: np.ndarray = field(repr=False)
    lambda2: float
    lambda_n: float

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @property
    def admissible(self) -> bool:
        """Spectral-gap condition; a single worker is always admissible."""
        if self.n == 1:
            return True
        return self.lambda2 < 1.0 and self.lambda_n > LAMBDA_N_FLOOR

    @property
    def contraction(self) -> float:
        """Per-round contraction factor ``max(|lambda2|, |lambda_n|)`` of disagreement."""
        if self.n == 1:
            return 0.0
        return max(abs(self.lambda2), abs(self.lambda_n))

    def gossip(self, rows):
        """Mix a ``(n, dim)`` stack of worker vectors: ``out[i] = sum_j W[j, i] rows[j]``."""
        return self.entries.T @ rows


def _from_entries(w) -> MixingMatrix:
    w = np.array(w, dtype=float)
    w.setflags(write=False)
    eig = jacobi_eigvalsh(w)
    eig.setflags(write=False)
    if w.shape[0] == 1:
        lam2 = lam_n = 1.0
    else:
        lam2, lam_n = float(eig[1]), float(eig[-1])
    return MixingMatrix(entries=w, eigenvalues=eig, lambda2=lam2, lambda_n=lam_n)


def build_ring(n: int) -> MixingMatrix:
    """Ring gossip matrix: 1/2 on the diagonal, 1/4 to each cyclic neighbour."""
    if n < 1:
        raise ValueError(f"worker count must be >= 1, got {n}")
    w = np.zeros((n, n))
    if n == 1:
        w[0, 0] = 1.0
    else:
        for i in range(n):
            w[i, i] += 0.5
            w[i, (i + 1) % n] += 0.25
            w[i, (i - 1) % n] += 0.25
    return _from_entries(w)


def build_complete(n: int) -> MixingMatrix:
    """Uniform averaging over all workers (one gossip round reaches consensus)."""
    if n < 1:
        raise ValueError(f"worker count must be >= 1, got {n}")
    return _from_entries(np.full((n, n), 1.0 / n))


def validate(entries, tol: float = USER_TOL, require_admissible: bool = True) -> MixingMatrix:
    """Check a user-supplied matrix and wrap it as a :class:`MixingMatrix`.

    The matrix is symmetrized after the checks pass, to strip representation
    noise. ``require_admissible=False`` skips the spectral-gap check (useful for
    identity matrices in tests).

    Raises:
        NotSymmetric: if ``|W - W^T|`` exceeds ``tol`` anywhere.
        NotDoublyStochastic: if an entry leaves [0, 1] or a row/column sum
            differs from 1 by more than ``tol``.
        SpectralGapViolation: if ``lambda2 >= 1`` or ``lambda_n <= -1/3``.
    """
    w = np.asarray(entries, dtype=float)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ValueError(f"mixing matrix must be square, got shape {w.shape}")
    asym = np.max(np.abs(w - w.T))
    if asym > tol:
        i, j = np.unravel_index(np.argmax(np.abs(w - w.T)), w.shape)
        raise NotSymmetric(
            f"symmetry check failed: |W[{i},{j}] - W[{j},{i}]| = {asym:.3e} > {tol:g}"
        )
    if w.min() < -tol or w.max() > 1.0 + tol:
        raise NotDoublyStochastic(
            f"entry range check failed: entries span [{w.min():.6g}, {w.max():.6g}], "
            "expected [0, 1]"
        )
    for axis, name in ((1, "row"), (0, "column")):
        sums = w.sum(axis=axis)
        dev = np.abs(sums - 1.0)
        if dev.max() > tol:
            k = int(np.argmax(dev))
            raise NotDoublyStochastic(f"{name} sum check failed: {name} {k} sums to {sums[k]!r}")
    m = _from_entries((w + w.T) / 2.0)
    if require_admissible and m.n > 1:
        if m.lambda2 >= 1.0:
            raise SpectralGapViolation(
                f"spectral gap check failed: lambda2 = {m.lambda2:.12g} >= 1 "
                "(graph is disconnected)"
            )
        if m.lambda_n <= LAMBDA_N_FLOOR:
            raise SpectralGapViolation(
                f"smallest-eigenvalue check failed: lambda_n = {m.lambda_n:.12g} <= -1/3"
            )
    return m


def spectrum(m: MixingMatrix) -> tuple[float, float]:
    """Return the cached ``(lambda2, lambda_n)`` pair."""
    return m.lambda2, m.lambda_n


def load_matrix(path) -> np.ndarray:
    """Read the text format: first line ``n``, then ``n`` rows of ``n`` numbers."""
    lines = [ln.strip() for ln in Path(path).read_text().splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise ValueError(f"{path}: empty matrix file")
    try:
        n = int(lines[0])
    except ValueError:
        raise ValueError(f"{path}: first line must be the integer n, got {lines[0]!r}") from None
    rows = lines[1:]
    if len(rows) != n:
        raise ValueError(f"{path}: expected {n} rows, found {len(rows)}")
    out = np.empty((n, n))
    for i, row in enumerate(rows):
        vals = row.split()
        if len(vals) != n:
            raise ValueError(f"{path}: row {i} has {len(vals)} entries, expected {n}")
        out[i] = [float(v) for v in vals]
    return out


def format_matrix(w) -> str:
    w = np.asarray(w, dtype=float)
    lines = [str(w.shape[0])]
    lines += [" ".join(repr(float(v)) for v in row) for row in w]
    return "\n".join(lines) + "\n"
