"""Finite-N game machinery: sampled populations, log-population taxes.

The realized tax for a player taking edge (i, j) is
alpha * (log(K_ij / K_i) - log R_ij), where K_i and K_ij count the players
at node i and on edge (i, j).  Conditioning on the player's own
location-action pair makes the other players' counts binomial (symmetric
policies) or Poisson binomial (heterogeneous policies), so the expected
tax has an exact finite-sum form that this module evaluates directly;
Monte Carlo is a cross-check, not the primary path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .kl_solver import PolicyKernel, _check_policy_shape
from .mean_field import propagate
from .scenario import Scenario, _readonly

GENERATOR_NAME = "pcg64"

_LOG_BINOM_CACHE: dict[int, np.ndarray] = {}


def _log_binom_coeffs(n: int) -> np.ndarray:
    """log of C(n, k) for k = 0..n."""
    coeffs = _LOG_BINOM_CACHE.get(n)
    if coeffs is None:
        k = np.arange(n + 1)
        coeffs = gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)
        coeffs.setflags(write=False)
        _LOG_BINOM_CACHE[n] = coeffs
    return coeffs


def binomial_expected_log_share(n_players: int, prob: float) -> float:
    """E[log((K + 1) / N)] with K ~ Binomial(N - 1, prob).

    This is the expected log share of the population on an event the
    tagged player is already counted in.  Terms are accumulated with
    exactly rounded summation.
    """
    if n_players < 1:
        raise ValueError("n_players must be >= 1")
    n = n_players - 1
    if prob <= 0.0:
        return math.log(1.0 / n_players)
    if prob >= 1.0:
        return 0.0
    k = np.arange(n + 1)
    log_pmf = _log_binom_coeffs(n) + k * math.log(prob) + (n - k) * math.log1p(-prob)
    terms = np.log((k + 1.0) / n_players) * np.exp(log_pmf)
    return math.fsum(terms)


def expected_tax_symmetric(
    n_players: int, node_prob: float, edge_prob: float, ref: float, alpha: float
) -> float:
    """Exact expected tax on an edge when all other players are exchangeable.

    ``node_prob`` is the probability that any other single player sits at
    the edge's source node; ``edge_prob`` is her conditional probability of
    then taking the edge; ``ref`` is the reference probability of the edge.
    """
    share_edge = binomial_expected_log_share(n_players, node_prob * edge_prob)
    share_node = binomial_expected_log_share(n_players, node_prob)
    return alpha * (share_edge - share_node) - alpha * math.log(ref)


def poisson_binomial_pmf(probs) -> np.ndarray:
    """Distribution of a sum of independent non-identical Bernoulli draws.

    O(n^2) convolution recurrence; exact up to float rounding.
    """
    probs = np.asarray(probs, dtype=np.float64)
    if np.any((probs < 0) | (probs > 1)):
        raise ValueError("probabilities must lie in [0, 1]")
    pmf = np.array([1.0])
    for p in probs:
        pmf = np.convolve(pmf, [1.0 - p, p])
    return pmf


def expected_tax_heterogeneous(
    n_players: int, edge_probs, node_probs, ref: float, alpha: float
) -> float:
    """Exact expected tax when the other N-1 players have individual policies.

    ``edge_probs[m]`` is the probability that other player m takes the
    edge; ``node_probs[m]`` that she sits at its source node.  Both arrays
    have length N-1.
    """
    edge_probs = np.asarray(edge_probs, dtype=np.float64)
    node_probs = np.asarray(node_probs, dtype=np.float64)
    if edge_probs.shape != (n_players - 1,) or node_probs.shape != (n_players - 1,):
        raise ValueError("need one event probability per other player (N - 1 each)")
    log_share = np.log(np.arange(1, n_players + 1) / n_players)
    share_edge = math.fsum(log_share * poisson_binomial_pmf(edge_probs))
    share_node = math.fsum(log_share * poisson_binomial_pmf(node_probs))
    return alpha * (share_edge - share_node) - alpha * math.log(ref)


# ---------------------------------------------------------------------------
# Monte Carlo population sampling
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PopulationSample:
    """One realized N-player rollout; motion is deterministic given actions."""

    n_agents: int
    locations: np.ndarray  # (T+1, N) node ids
    actions: np.ndarray  # (T, N) chosen destination nodes
    node_counts: np.ndarray  # (T+1, V)
    edge_counts: np.ndarray  # (T, E)
    seed: int
    generator: str = GENERATOR_NAME

    def __post_init__(self):
        for name in ("locations", "actions", "node_counts", "edge_counts"):
            object.__setattr__(self, name, _readonly(getattr(self, name), np.int64))


@dataclass(frozen=True)
class TaxRecord:
    """Realized toll on one populated edge at one stage."""

    t: int
    node: int
    dest: int
    count: int
    tax: float


def simulate_population(
    scenario: Scenario, policy: PolicyKernel, n_agents: int, seed
) -> PopulationSample:
    """Sample N players: i.i.d. starts from P_0, i.i.d. route draws per stage."""
    if n_agents < 1:
        raise ValueError("n_agents must be >= 1")
    _check_policy_shape(scenario, policy)
    rng = np.random.default_rng(seed)
    g = scenario.graph
    t_count = scenario.horizon

    locations = np.empty((t_count + 1, n_agents), dtype=np.int64)
    actions = np.empty((t_count, n_agents), dtype=np.int64)
    node_counts = np.empty((t_count + 1, g.node_count), dtype=np.int64)
    edge_counts = np.empty((t_count, g.edge_count), dtype=np.int64)

    locations[0] = rng.choice(g.node_count, size=n_agents, p=scenario.initial.mass)
    for t in range(t_count):
        here = locations[t]
        node_counts[t] = np.bincount(here, minlength=g.node_count)
        chosen_edge = np.empty(n_agents, dtype=np.int64)
        for i in np.flatnonzero(node_counts[t]):
            sel = here == i
            lo, hi = int(g.row_start[i]), int(g.row_start[i + 1])
            cum = np.cumsum(policy.probs[t, lo:hi])
            # scale draws by the row total so rounding cannot push one past the end
            draws = rng.random(int(node_counts[t, i])) * cum[-1]
            chosen_edge[sel] = lo + np.searchsorted(cum, draws, side="right")
        actions[t] = g.edge_dst[chosen_edge]
        edge_counts[t] = np.bincount(chosen_edge, minlength=g.edge_count)
        locations[t + 1] = actions[t]
    node_counts[t_count] = np.bincount(locations[t_count], minlength=g.node_count)

    if isinstance(seed, np.random.SeedSequence):
        seed_repr = int(seed.entropy) if isinstance(seed.entropy, int) else -1
    else:
        seed_repr = int(seed)
    return PopulationSample(n_agents, locations, actions, node_counts, edge_counts, seed_repr)


def simulate_replications(scenario: Scenario, policy: PolicyKernel, n_agents: int, seed: int, reps: int):
    """Independent replications on substreams spawned from one root seed."""
    children = np.random.SeedSequence(seed).spawn(reps)
    for child in children:
        yield simulate_population(scenario, policy, n_agents, child)


def realized_taxes(sample: PopulationSample, scenario: Scenario) -> list[TaxRecord]:
    """Tolls on every populated edge; empty links produce no record."""
    g = scenario.graph
    records = []
    for t in range(sample.actions.shape[0]):
        for e in np.flatnonzero(sample.edge_counts[t]):
            i, j = int(g.edge_src[e]), int(g.edge_dst[e])
            k_edge = int(sample.edge_counts[t, e])
            k_node = int(sample.node_counts[t, i])
            tax = scenario.alpha * (
                math.log(k_edge / k_node) - math.log(scenario.reference.probs[t, e])
            )
            records.append(TaxRecord(t, i, j, k_edge, tax))
    return records


# ---------------------------------------------------------------------------
# Convergence diagnostics and finite-N best response
# ---------------------------------------------------------------------------

def _expected_tax_table(scenario: Scenario, policy: PolicyKernel, n_players: int) -> np.ndarray:
    """Exact expected tax per (t, edge) when everyone plays ``policy``."""
    g = scenario.graph
    flow = propagate(scenario, policy)
    table = np.empty((scenario.horizon, g.edge_count))
    for t in range(scenario.horizon):
        node_probs = flow.distributions[t][g.edge_src]
        for e in range(g.edge_count):
            table[t, e] = expected_tax_symmetric(
                n_players,
                float(node_probs[e]),
                float(policy.probs[t, e]),
                float(scenario.reference.probs[t, e]),
                scenario.alpha,
            )
    return table


def expected_tax_gap(
    scenario: Scenario,
    population_policy: PolicyKernel,
    n_list,
    support_tol: float = 1e-9,
) -> dict[int, float]:
    """Per-N worst gap between the exact expected tax and its large-N limit.

    The limit on a supported edge is alpha * log(policy / reference); the
    maximum runs over edges whose mean-field flow probability exceeds
    ``support_tol``.
    """
    g = scenario.graph
    flow = propagate(scenario, population_policy)
    toll_log = population_policy.toll_log()
    log_ref = np.log(scenario.reference.probs)
    support = []
    limits = []
    for t in range(scenario.horizon):
        node_probs = flow.distributions[t][g.edge_src]
        mask = node_probs * population_policy.probs[t] > support_tol
        for e in np.flatnonzero(mask):
            support.append((t, int(e), float(node_probs[e])))
            limits.append(scenario.alpha * (toll_log[t, e] - log_ref[t, e]))

    table: dict[int, float] = {}
    for n in n_list:
        worst = 0.0
        for (t, e, node_prob), limit in zip(support, limits):
            tax = expected_tax_symmetric(
                int(n),
                node_prob,
                float(population_policy.probs[t, e]),
                float(scenario.reference.probs[t, e]),
                scenario.alpha,
            )
            worst = max(worst, abs(tax - limit))
        table[int(n)] = worst
    return table


@dataclass(frozen=True, eq=False)
class FiniteBestResponse:
    """Deterministic best response to a symmetric population of N-1 others."""

    policy: PolicyKernel  # point-mass rows on the argmin edges
    epsilon: float  # cost of the symmetric policy minus best-response cost
    state_values: np.ndarray  # (T+1, V) optimal cost-to-go
    symmetric_cost: float  # J(population policy against itself)


def best_response_finite_n(
    scenario: Scenario, population_policy: PolicyKernel, n_players: int
) -> FiniteBestResponse:
    """Solve the tagged player's finite-N control problem exactly.

    The expected taxes induced by the symmetric population are fixed edge
    costs for the tagged player (her own policy cannot move them), so her
    best response is a deterministic finite-horizon shortest path.  The
    returned epsilon = J(symmetric vs symmetric) - best-response cost is
    the suboptimality of staying with the crowd; it is >= 0 up to float
    rounding.
    """
    _check_policy_shape(scenario, population_policy)
    g = scenario.graph
    t_count = scenario.horizon
    tax = _expected_tax_table(scenario, population_policy, n_players)
    total_cost = scenario.edge_costs + tax

    values = np.zeros((t_count + 1, g.node_count))
    probs = np.zeros((t_count, g.edge_count))
    for t in range(t_count - 1, -1, -1):
        through = total_cost[t] + values[t + 1][g.edge_dst]
        for i in range(g.node_count):
            sl = g.edge_slice(i)
            best = int(np.argmin(through[sl]))
            values[t, i] = through[sl][best]
            probs[t, sl.start + best] = 1.0

    flow = propagate(scenario, population_policy)
    symmetric_cost = 0.0
    for t in range(t_count):
        edge_flow = flow.distributions[t][g.edge_src] * population_policy.probs[t]
        symmetric_cost += float(edge_flow @ total_cost[t])
    best_cost = float(scenario.initial.mass @ values[0])
    return FiniteBestResponse(PolicyKernel(probs), symmetric_cost - best_cost, values, symmetric_cost)
