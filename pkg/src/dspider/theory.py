"""Closed-form constants, step-size bounds, parameter schedules and gradient costs."""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

from .errors import InadmissibleSpectrum, NonpositiveD

__all__ = [
    "TheoryConstants",
    "ParamRecommendation",
    "ETA_VARIANTS",
    "b_n",
    "constants",
    "eta_max",
    "schedule",
    "recommend",
    "cost_bound",
    "iteration_counts",
]

# Denominator multipliers k in 1 / (k * sqrt(c2) * L) for the three known
# forms of the second step-size branch.
ETA_VARIANTS = {
    "standard": 4.0 * math.sqrt(3.0),
    "intermediate": 4.0 * math.sqrt(6.0),
    "conservative": 8.0 * math.sqrt(3.0),
}
DEFAULT_ETA_VARIANT = "conservative"
ETA_SAFETY = 0.9


@dataclass(frozen=True)
class TheoryConstants:
    b_n: complex
    c1: float
    c2: float
    d: float
    eta_max: float
    lambda2: float
    lambda_n: float
    lipschitz: float
    eta: float
    q: int
    s2: int

    @property
    def b_n_abs(self) -> float:
        return abs(self.b_n)

    @property
    def valid(self) -> bool:
        """False when ``d <= 0``: the step size is too large for the bound to hold."""
        return self.d > 0


@dataclass(frozen=True)
class ParamRecommendation:
    epsilon: float
    s1: int
    s2: int
    q: int
    eta: float
    k_iterations: int
    predicted_cost: float
    l: float


def b_n(lambda_n: float) -> complex:
    """``lambda_n - sqrt(lambda_n^2 - lambda_n)``.

    Real for ``lambda_n <= 0``; for ``lambda_n in (0, 1]`` the root is
    imaginary and the value is complex with modulus ``sqrt(lambda_n)``.
    """
    return lambda_n - cmath.sqrt(lambda_n * lambda_n - lambda_n)


def _check_spectrum(lambda2, lambda_n, lipschitz):
    if not 0.0 <= lambda2 < 1.0:
        raise InadmissibleSpectrum(f"lambda2 must lie in [0, 1), got {lambda2}")
    if not -1.0 / 3.0 < lambda_n <= 1.0:
        raise InadmissibleSpectrum(f"lambda_n must lie in (-1/3, 1], got {lambda_n}")
    if not lipschitz > 0:
        raise ValueError(f"Lipschitz constant must be > 0, got {lipschitz}")


def _c1_c2(lambda2, lambda_n):
    b = abs(b_n(lambda_n))
    if lambda_n >= 0:
        # |b_n| = sqrt(lambda_n) exactly; avoid the rounding in abs(complex)
        b = math.sqrt(lambda_n)
    one_minus_b2 = 1.0 - b * b
    c1 = max(1.0 / one_minus_b2, 1.0 / (1.0 - lambda2) ** 2)
    c2 = max(
        lambda_n * lambda_n / one_minus_b2,
        lambda2 * lambda2 / ((1.0 - math.sqrt(lambda2)) ** 2 * (1.0 - lambda2)),
    )
    return c1, c2


def eta_max(lipschitz: float, c2: float, variant: str = DEFAULT_ETA_VARIANT) -> float:
    """Largest admissible step size, ``min((sqrt(13) - 1) / (12 L), 1 / (k sqrt(c2) L))``.

    ``variant`` picks the multiplier ``k``: ``"standard"`` (4 sqrt 3),
    ``"intermediate"`` (4 sqrt 6) or ``"conservative"`` (8 sqrt 3, the smallest bound).
    With ``c2 == 0`` only the first branch applies.
    """
    if not lipschitz > 0:
        raise ValueError(f"Lipschitz constant must be > 0, got {lipschitz}")
    if c2 < 0:
        raise ValueError(f"c2 must be >= 0, got {c2}")
    first = (math.sqrt(13.0) - 1.0) / (12.0 * lipschitz)
    if c2 == 0:
        return first
    return min(first, 1.0 / (ETA_VARIANTS[variant] * math.sqrt(c2) * lipschitz))


def constants(
    lambda2: float,
    lambda_n: float,
    lipschitz: float,
    eta: float,
    q: int,
    s2: int,
    variant: str = DEFAULT_ETA_VARIANT,
) -> TheoryConstants:
    """Evaluate the estimator-error constants for a topology and step size.

    ``d = 1 - 48 c2 q eta^2 L^2 / s2``; a nonpositive ``d`` is reported through
    :attr:`TheoryConstants.valid` rather than raised.
    """
    _check_spectrum(lambda2, lambda_n, lipschitz)
    c1, c2 = _c1_c2(lambda2, lambda_n)
    d = 1.0 - 48.0 * c2 * q * eta * eta * lipschitz * lipschitz / s2
    return TheoryConstants(
        b_n=b_n(lambda_n),
        c1=c1,
        c2=c2,
        d=d,
        eta_max=eta_max(lipschitz, c2, variant),
        lambda2=lambda2,
        lambda_n=lambda_n,
        lipschitz=lipschitz,
        eta=eta,
        q=q,
        s2=s2,
    )


def _ceil_ratio(x: float) -> int:
    # guard against 99.99999999999999 style rounding of exact integer ratios
    return max(1, math.ceil(x * (1.0 - 1e-12)))


def schedule(sigma: float, epsilon: float) -> tuple[int, int, int]:
    """Batch sizes and restart period ``(s1, s2, q) = (sigma^2/eps^2, sigma/eps, sigma/eps)``, ceiled."""
    if not (sigma > 0 and epsilon > 0):
        raise ValueError("sigma and epsilon must be > 0")
    r = sigma / epsilon
    return _ceil_ratio(r * r), _ceil_ratio(r), _ceil_ratio(r)


def recommend(
    epsilon: float,
    sigma: float,
    lipschitz: float,
    c1: float,
    c2: float,
    d: float,
    f0_gap: float,
    zeta0: float,
    grad0_norm: float,
    variant: str = DEFAULT_ETA_VARIANT,
) -> ParamRecommendation:
    """Parameter choice for reaching an ``epsilon``-stationary mean iterate.

    The step size is ``0.9 * eta_max``; ``K = floor(l / eps^2) + 1`` with
    ``l = 2 f0_gap / eta + 84 c1 L^2 eta^2 / d * (sigma^2 + zeta0^2 + |grad f(0)|^2)``.
    """
    if not (epsilon > 0 and sigma > 0 and lipschitz > 0):
        raise ValueError("epsilon, sigma and lipschitz must be > 0")
    if not d > 0:
        raise NonpositiveD(f"d = {d} <= 0: step size too large for the error bound")
    s1, s2, q = schedule(sigma, epsilon)
    eta = ETA_SAFETY * eta_max(lipschitz, c2, variant)
    L2 = lipschitz * lipschitz
    l = 2.0 * f0_gap / eta + 84.0 * c1 * L2 * eta * eta / d * (
        sigma * sigma + zeta0 * zeta0 + grad0_norm * grad0_norm
    )
    k = math.floor(l / epsilon**2) + 1
    cost = 2.0 * l * sigma / epsilon**3 + 2.0 * sigma * sigma / epsilon**2
    return ParamRecommendation(
        epsilon=epsilon, s1=s1, s2=s2, q=q, eta=eta, k_iterations=k, predicted_cost=cost, l=l
    )


def iteration_counts(K: int, q: int) -> tuple[int, int]:
    """Number of restart rounds and of recursive rounds among ``k = 0..K-1``."""
    restarts = (K - 1) // q + 1 if K > 0 else 0
    return restarts, K - restarts


def cost_bound(K: int, q: int, s1: int, s2: int) -> tuple[int, int, int]:
    """Per-worker gradient cost of ``K`` rounds.

    Returns ``(paper_bound, exact_paper_convention, exact_raw_evals)``:
    ``(floor(K/q) + 1) * ((q - 1) s2 + s1)``; the exact count charging one
    ``s2`` batch per recursive round; and the exact count of per-sample
    gradient evaluations, where a recursive round evaluates its batch twice.
    """
    if min(K, q, s1, s2) < 1:
        raise ValueError("K, q, s1 and s2 must all be positive")
    restarts, others = iteration_counts(K, q)
    bound = (K // q + 1) * ((q - 1) * s2 + s1)
    return bound, restarts * s1 + others * s2, restarts * s1 + others * 2 * s2
