"""Mean-field traffic routing under a log-population toll.

Solves the routing game's mean-field equilibrium by a single linear
backward recursion, and validates it against finite-population
simulation, fictitious play, and an exact symmetric-equilibrium solver.
"""

__version__ = "0.1.0"

from .fictitious_play import BeliefPath, SingleStageGame, assumed_cost, fp_run, fp_step
from .finite_population import (
    FiniteBestResponse,
    PopulationSample,
    TaxRecord,
    best_response_finite_n,
    expected_tax_heterogeneous,
    expected_tax_symmetric,
    expected_tax_gap,
    poisson_binomial_pmf,
    realized_taxes,
    simulate_population,
    simulate_replications,
)
from .kl_solver import LogDesirability, PolicyKernel, backward_pass, extract_policy, value
from .mean_field import (
    FlowTrajectory,
    MeanFieldSolution,
    ZeroSupportError,
    equalizer_gap,
    evaluate_policy_cost,
    mfe_solve,
    propagate,
    random_policy,
)
from .scenario import (
    Distribution,
    InvalidScenarioError,
    ReferencePolicy,
    Scenario,
    ScenarioFormatError,
    StageCosts,
    TrafficGraph,
    Violation,
    build_gridworld,
    deserialize,
    grid_node,
    read_scenario,
    serialize,
    truncate_scenario,
    validate,
    write_scenario,
)
from .symmetric_equilibrium import (
    EquilibriumResult,
    route_cost,
    route_load,
    solve_single_stage_mfe,
    solve_symmetric_ne,
)

__all__ = [
    "BeliefPath",
    "Distribution",
    "EquilibriumResult",
    "FiniteBestResponse",
    "FlowTrajectory",
    "InvalidScenarioError",
    "LogDesirability",
    "MeanFieldSolution",
    "PolicyKernel",
    "PopulationSample",
    "ReferencePolicy",
    "Scenario",
    "ScenarioFormatError",
    "SingleStageGame",
    "StageCosts",
    "TaxRecord",
    "TrafficGraph",
    "Violation",
    "ZeroSupportError",
    "assumed_cost",
    "backward_pass",
    "best_response_finite_n",
    "build_gridworld",
    "deserialize",
    "equalizer_gap",
    "evaluate_policy_cost",
    "expected_tax_heterogeneous",
    "expected_tax_symmetric",
    "extract_policy",
    "route_cost",
    "fp_run",
    "fp_step",
    "route_load",
    "grid_node",
    "expected_tax_gap",
    "mfe_solve",
    "poisson_binomial_pmf",
    "propagate",
    "random_policy",
    "read_scenario",
    "realized_taxes",
    "serialize",
    "simulate_population",
    "simulate_replications",
    "solve_single_stage_mfe",
    "solve_symmetric_ne",
    "truncate_scenario",
    "validate",
    "value",
    "write_scenario",
]
