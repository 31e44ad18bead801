"""Exact symmetric Nash equilibrium of the single-stage route game.

At a symmetric equilibrium the per-route cost function f_j(q) (travel cost
plus exact expected toll when everyone routes with probability q) is
equalized across used routes and no unused route is cheaper.  Each f_j is
continuous and strictly increasing, so the equilibrium is the unique
solution of sum_j f_j^{-1}(lambda) = 1, found here by nested bisection:
an inner bisection inverts each f_j, an outer one pins lambda.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fictitious_play import SingleStageGame, assumed_cost
from .finite_population import expected_tax_symmetric
from .scenario import _readonly

INNER_TOL = 1e-12  # |f(q) - lambda| target for the per-route inversion
OUTER_TOL = 1e-12  # width target for the lambda bracket
_MAX_BISECT = 200


@dataclass(frozen=True, eq=False)
class EquilibriumResult:
    """Symmetric equilibrium with its multiplier and stationarity residuals.

    ``residuals[j]`` is |f_j(q_j) - lambda| on active routes and
    max(0, lambda - f_j(0)) on inactive ones; both must vanish at an
    equilibrium.
    """

    q: np.ndarray
    lam: float
    residuals: np.ndarray
    active_set: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "q", _readonly(self.q))
        object.__setattr__(self, "residuals", _readonly(self.residuals))


def route_cost(game: SingleStageGame, route: int, q: float) -> float:
    """Cost of the route when every player takes it with probability q."""
    return float(game.travel_cost[route]) + expected_tax_symmetric(
        game.n_players, 1.0, float(q), float(game.reference[route]), game.alpha
    )


def route_load(game: SingleStageGame, route: int, lam: float) -> float:
    """Inverse of route_cost clamped to [0, 1]; exploits strict monotonicity."""
    if lam <= route_cost(game, route, 0.0):
        return 0.0
    if lam >= route_cost(game, route, 1.0):
        return 1.0
    lo, hi = 0.0, 1.0
    for _ in range(_MAX_BISECT):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        val = route_cost(game, route, mid)
        if abs(val - lam) <= INNER_TOL:
            return mid
        if val < lam:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _mass_at(game: SingleStageGame, lam: float) -> float:
    return sum(route_load(game, j, lam) for j in range(game.route_count))


def _boundary(game: SingleStageGame, lo: float, hi: float, above) -> float:
    """Bisect for the lambda where ``above(mass)`` flips from False to True."""
    for _ in range(_MAX_BISECT):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi or hi - lo <= OUTER_TOL:
            break
        if above(_mass_at(game, mid)):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def solve_symmetric_ne(game: SingleStageGame) -> EquilibriumResult:
    """Unique symmetric equilibrium of the N-player single-stage game.

    The total mass sum_j g_j(lambda) is continuous and nondecreasing with
    flat segments at the clamp boundaries; the set where it equals one is
    a (possibly degenerate) interval whose midpoint is returned.  The
    per-route probabilities are identical across that interval.

    With a single player the route costs do not depend on q at all, so the
    solver splits the mass evenly over the cheapest routes (the symmetric
    member of the equilibrium set).
    """
    if game.n_players == 1:
        costs = np.array([route_cost(game, j, 0.0) for j in range(game.route_count)])
        lam = float(costs.min())
        best = costs == lam
        q = best / best.sum()
        residuals = np.where(best, 0.0, np.maximum(0.0, lam - costs))
        return EquilibriumResult(q, lam, residuals, tuple(int(j) for j in np.flatnonzero(best)))

    lo = min(route_cost(game, j, 0.0) for j in range(game.route_count)) - 1.0
    hi = max(route_cost(game, j, 1.0) for j in range(game.route_count)) + 1.0
    lam_lo = _boundary(game, lo, hi, lambda mass: mass >= 1.0)
    lam_hi = _boundary(game, lo, hi, lambda mass: mass > 1.0)
    lam_mid = 0.5 * (lam_lo + lam_hi)

    q = np.array([route_load(game, j, lam_mid) for j in range(game.route_count)])
    active = tuple(int(j) for j in np.flatnonzero(q > 0))

    # report the multiplier that makes the stationarity conditions sharp
    lam = max(route_cost(game, j, float(q[j])) for j in active)
    residuals = np.empty(game.route_count)
    for j in range(game.route_count):
        if q[j] > 0:
            residuals[j] = abs(route_cost(game, j, float(q[j])) - lam)
        else:
            residuals[j] = max(0.0, lam - route_cost(game, j, 0.0))
    return EquilibriumResult(q, lam, residuals, active)


def solve_single_stage_mfe(game: SingleStageGame) -> np.ndarray:
    """Single-stage mean-field equilibrium: exponential tilt of the reference."""
    score = np.log(game.reference) - game.travel_cost / game.alpha
    score -= score.max()
    weights = np.exp(score)
    return weights / weights.sum()


def best_response_costs(game: SingleStageGame, q: np.ndarray) -> np.ndarray:
    """Per-route assumed costs against a symmetric profile q (Wardrop check)."""
    return assumed_cost(game, q)
