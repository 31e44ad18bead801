"""Command-line entry point: solve, simulate, learn, and reproduce.

Every output file carries its run manifest as leading comment lines, so a
run can be reproduced exactly; with a fixed seed the numeric payload
(every non-comment line) is byte-identical across runs on one platform.
Numeric formatting is locale-independent (dot decimal separator).
"""

from __future__ import annotations

import argparse
import hashlib
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .fictitious_play import SingleStageGame, fp_run
from .finite_population import (
    GENERATOR_NAME,
    best_response_finite_n,
    expected_tax_gap,
    realized_taxes,
    simulate_population,
    simulate_replications,
)
from .kl_solver import PolicyKernel, backward_pass, extract_policy, value
from .mean_field import FlowTrajectory, equalizer_gap, mfe_solve, propagate, random_policy
from .scenario import (
    InvalidScenarioError,
    Scenario,
    ScenarioFormatError,
    build_gridworld,
    grid_node,
    read_scenario,
    validate,
    write_scenario,
)
from .symmetric_equilibrium import solve_single_stage_mfe, solve_symmetric_ne

PROG = "mft-route"

# Reproduction preset for the grid-world experiment: 10 x 10 cells, two
# staggered walls forcing an S-shaped detour from the north-west origin to
# the south-east destination, horizon 70.
FIG2_WIDTH = 10
FIG2_HEIGHT = 10
FIG2_HORIZON = 70
FIG2_ORIGIN = grid_node(FIG2_WIDTH, 0, 0)
FIG2_DESTINATION = grid_node(FIG2_WIDTH, 9, 9)
FIG2_OBSTACLES = tuple(
    [grid_node(FIG2_WIDTH, 3, y) for y in range(0, 7)]
    + [grid_node(FIG2_WIDTH, 6, y) for y in range(3, 10)]
)
FIG2_FRAMES = (20, 35, 50)

# Reproduction preset for the three-route fictitious play experiment.
FIG4_COSTS = (2.0, 1.0, 3.0)
FIG4_REFERENCE = (1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)
FIG4_ALPHA = 1.0
FIG4_PLAYERS = (20, 200)
FIG4_DAYS = 10000

OBSTACLE_SENTINEL = 256  # outside the 0..255 data range by construction


def fig2_scenario(alpha: float) -> Scenario:
    return build_gridworld(
        FIG2_WIDTH,
        FIG2_HEIGHT,
        FIG2_OBSTACLES,
        FIG2_ORIGIN,
        FIG2_DESTINATION,
        FIG2_HORIZON,
        alpha,
    )


def three_route_scenario(costs=FIG4_COSTS, reference=FIG4_REFERENCE, alpha=FIG4_ALPHA) -> Scenario:
    """Origin plus one sink per route; sinks self-loop at zero cost."""
    from .scenario import Distribution, ReferencePolicy, StageCosts, TrafficGraph

    routes = len(costs)
    graph = TrafficGraph(
        (tuple(range(1, routes + 1)),) + tuple((j,) for j in range(1, routes + 1))
    )
    cost_row = np.concatenate([np.asarray(costs, dtype=np.float64), np.zeros(routes)])
    ref_row = np.concatenate([np.asarray(reference, dtype=np.float64), np.ones(routes)])
    return Scenario(
        graph=graph,
        costs=StageCosts.stationary(cost_row, 1),
        reference=ReferencePolicy.stationary(ref_row, 1),
        alpha=float(alpha),
        initial=Distribution.point_mass(routes + 1, 0),
    )


# ---------------------------------------------------------------------------
# Manifests and output plumbing
# ---------------------------------------------------------------------------

@dataclass
class RunManifest:
    subcommand: str
    params: dict
    seed: int | None = None
    input_digests: dict | None = None
    duration_s: float | None = None

    def header_lines(self) -> list[str]:
        lines = [
            f"# manifest: tool={PROG} version={__version__}",
            f"# manifest: subcommand={self.subcommand}",
        ]
        for key in sorted(self.params):
            lines.append(f"# manifest: {key}={self.params[key]}")
        if self.seed is not None:
            lines.append(f"# manifest: seed={self.seed} generator={GENERATOR_NAME}")
        for name, digest in sorted((self.input_digests or {}).items()):
            lines.append(f"# manifest: sha256[{name}]={digest}")
        if self.duration_s is not None:
            lines.append(f"# manifest: duration_s={self.duration_s:.3f}")
        return lines


def _digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _num(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_csv(path, header: str, rows, manifest: RunManifest) -> None:
    lines = manifest.header_lines()
    lines.append(header)
    for row in rows:
        lines.append(",".join(_num(x) if not isinstance(x, str) else x for x in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def emit_heatmap(
    flow: FlowTrajectory,
    t: int,
    width: int,
    height: int,
    obstacles=(),
    header_lines=(),
) -> str:
    """Plain-text graymap of the stage-t distribution, one pixel per cell.

    Intensities are round(255 * mass / max mass); obstacle cells are drawn
    at the reserved sentinel 256, which no data pixel can reach.
    """
    mass = flow.distributions[t]
    if mass.shape[0] != width * height:
        raise ValueError(
            f"scenario has {mass.shape[0]} nodes, not a {width} x {height} grid"
        )
    peak = float(mass.max())
    obstacle_set = {int(o) for o in obstacles}
    lines = ["P2"]
    lines.append(f"# obstacle cells use sentinel value {OBSTACLE_SENTINEL}; data range is 0..255")
    lines.extend(header_lines)
    lines.append(f"{width} {height}")
    lines.append(str(OBSTACLE_SENTINEL))
    for y in range(height):
        row = []
        for x in range(width):
            node = grid_node(width, x, y)
            if node in obstacle_set:
                row.append(str(OBSTACLE_SENTINEL))
            elif peak == 0.0:
                row.append("0")
            else:
                row.append(str(int(round(255.0 * float(mass[node]) / peak))))
        lines.append(" ".join(row))
    return "\n".join(lines) + "\n"


def write_policy_csv(path, scenario: Scenario, policy: PolicyKernel, manifest: RunManifest) -> None:
    rows = []
    for t in range(scenario.horizon):
        for e, i, j in scenario.graph.edges():
            rows.append((t, i, j, policy.probs[t, e]))
    write_csv(path, "t,i,j,value", rows, manifest)


def read_policy_csv(path, scenario: Scenario) -> PolicyKernel:
    """Parse a (t, i, j, value) policy CSV against the scenario's edge set."""
    g = scenario.graph
    probs = np.full((scenario.horizon, g.edge_count), np.nan)
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioFormatError(f"cannot read policy file {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line or line == "t,i,j,value":
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise ScenarioFormatError(f"line {lineno}: policy rows are 't,i,j,value'")
        try:
            t, i, j = int(parts[0]), int(parts[1]), int(parts[2])
            p = float(parts[3])
        except ValueError:
            raise ScenarioFormatError(f"line {lineno}: cannot parse policy row") from None
        if not 0 <= t < scenario.horizon:
            raise ScenarioFormatError(f"line {lineno}: stage {t} outside 0..{scenario.horizon - 1}")
        try:
            e = g.edge_index(i, j)
        except KeyError:
            raise ScenarioFormatError(f"line {lineno}: edge {i} -> {j} not in scenario graph") from None
        probs[t, e] = p
    missing = np.argwhere(np.isnan(probs))
    if missing.size:
        t, e = (int(v) for v in missing[0])
        raise ScenarioFormatError(
            f"policy file missing stage {t} edge {int(g.edge_src[e])} -> {int(g.edge_dst[e])}"
        )
    return PolicyKernel(probs)


# ---------------------------------------------------------------------------
# Subcommand handlers
# ---------------------------------------------------------------------------

def _load_scenario(args) -> tuple[Scenario, dict]:
    scenario = read_scenario(args.scenario)
    violations = validate(scenario)
    if violations:
        raise InvalidScenarioError(violations)
    return scenario, {"scenario": _digest(args.scenario)}


def _cmd_validate(args) -> int:
    scenario = read_scenario(args.scenario)
    violations = validate(scenario)
    if violations:
        for v in violations:
            print(str(v), file=sys.stderr)
        print(f"{len(violations)} violation(s) found", file=sys.stderr)
        return 1
    print("scenario is valid")
    return 0


def _cmd_solve(args) -> int:
    start = time.perf_counter()
    scenario, digests = _load_scenario(args)
    desirability = backward_pass(scenario)
    policy = extract_policy(scenario, desirability)
    duration = time.perf_counter() - start
    manifest = RunManifest(
        "solve", {"scenario": args.scenario}, input_digests=digests, duration_s=duration
    )
    if args.out_policy:
        write_policy_csv(args.out_policy, scenario, policy, manifest)
    if args.out_logphi:
        rows = [
            (t, i, desirability.log_phi[t, i])
            for t in range(scenario.horizon + 1)
            for i in range(scenario.graph.node_count)
        ]
        write_csv(args.out_logphi, "t,i,value", rows, manifest)
    print(f"optimal expected cost from the initial distribution: {value(desirability, scenario.initial, 0)!r}")
    return 0


def _cmd_mfe(args) -> int:
    start = time.perf_counter()
    scenario, digests = _load_scenario(args)
    solution = mfe_solve(scenario)
    duration = time.perf_counter() - start
    manifest = RunManifest(
        "mfe",
        {"scenario": args.scenario, "certify_equalizer": args.certify_equalizer},
        seed=args.seed,
        input_digests=digests,
        duration_s=duration,
    )
    if args.out_policy:
        write_policy_csv(args.out_policy, scenario, solution.policy, manifest)
    if args.out_flow:
        rows = [
            (t, i, solution.flow.distributions[t, i])
            for t in range(scenario.horizon + 1)
            for i in range(scenario.graph.node_count)
        ]
        write_csv(args.out_flow, "t,i,mass", rows, manifest)
    if args.certify_equalizer:
        rng = np.random.default_rng(args.seed)
        trials = [random_policy(scenario, rng) for _ in range(args.certify_equalizer)]
        gap = equalizer_gap(scenario, solution.policy, trials, solution.desirability)
        print(f"equalizer gap over {args.certify_equalizer} random policies: {gap!r}")
    print(f"mean-field equilibrium computed over {scenario.horizon} stages")
    return 0


def _cmd_simulate(args) -> int:
    start = time.perf_counter()
    scenario, digests = _load_scenario(args)
    policy = read_policy_csv(args.policy, scenario)
    digests["policy"] = _digest(args.policy)

    threads = args.threads if args.threads > 0 else (os.cpu_count() or 1)
    if threads > 1 and args.reps > 1:
        children = np.random.SeedSequence(args.seed).spawn(args.reps)
        with ThreadPoolExecutor(max_workers=min(threads, args.reps)) as pool:
            # substreams make replications order-independent; map keeps output order
            samples = list(
                pool.map(lambda c: simulate_population(scenario, policy, args.agents, c), children)
            )
    else:
        samples = list(simulate_replications(scenario, policy, args.agents, args.seed, args.reps))
    rows = []
    for rep, sample in enumerate(samples):
        for record in realized_taxes(sample, scenario):
            rows.append((rep, record.t, record.node, record.dest, record.count, record.tax))
    duration = time.perf_counter() - start
    manifest = RunManifest(
        "simulate",
        {
            "scenario": args.scenario,
            "policy": args.policy,
            "agents": args.agents,
            "reps": args.reps,
            "threads": args.threads,
        },
        seed=args.seed,
        input_digests=digests,
        duration_s=duration,
    )
    write_csv(args.out, "rep,t,i,j,count,realized_tax", rows, manifest)
    print(f"simulated {args.reps} replication(s) of {args.agents} agents")
    return 0


def _cmd_nash_gap(args) -> int:
    start = time.perf_counter()
    scenario, digests = _load_scenario(args)
    n_list = [int(tok) for tok in args.agents.split(",") if tok.strip()]
    if not n_list:
        raise ValueError("--agents needs at least one player count")
    solution = mfe_solve(scenario)
    gaps = expected_tax_gap(scenario, solution.policy, n_list)
    rows = []
    for n in n_list:
        br = best_response_finite_n(scenario, solution.policy, n)
        rows.append((n, gaps[n], br.epsilon))
    duration = time.perf_counter() - start
    manifest = RunManifest(
        "nash-gap",
        {"scenario": args.scenario, "agents": args.agents},
        input_digests=digests,
        duration_s=duration,
    )
    write_csv(args.out, "n_agents,expected_tax_gap,epsilon_nash", rows, manifest)
    print(f"computed tax-convergence and best-response gaps for N in {n_list}")
    return 0


def _parse_game(args) -> SingleStageGame:
    costs = np.array([float(tok) for tok in args.costs.split(",")])
    reference = np.array([float(tok) for tok in args.ref.split(",")])
    if args.routes != len(costs):
        raise ValueError(f"--routes {args.routes} but {len(costs)} costs given")
    return SingleStageGame(costs, reference, args.alpha, args.agents)


def _cmd_fp(args) -> int:
    start = time.perf_counter()
    game = _parse_game(args)
    if args.init == "uniform":
        initial = np.full(game.route_count, 1.0 / game.route_count)
    else:
        initial = np.array([float(tok) for tok in args.init.split(",")])
    result = fp_run(game, initial, args.days)
    rows = []
    for d in range(len(result.path.beliefs)):
        choice = result.path.choices[d] if d < len(result.path.choices) else -1
        rows.append(
            (d + 1, *result.path.beliefs[d], choice, result.dist_to_finite_ne[d], result.dist_to_mfe[d])
        )
    duration = time.perf_counter() - start
    manifest = RunManifest(
        "fp",
        {
            "routes": args.routes,
            "costs": args.costs,
            "ref": args.ref,
            "alpha": args.alpha,
            "agents": args.agents,
            "days": args.days,
            "init": args.init,
        },
        duration_s=duration,
    )
    belief_cols = ",".join(f"q{j + 1}" for j in range(game.route_count))
    write_csv(args.out, f"day,{belief_cols},r,dist_to_ne,dist_to_mfe", rows, manifest)
    print(
        f"fictitious play finished after {args.days} days; final distance to the "
        f"finite-N equilibrium: {result.dist_to_finite_ne[-1]!r}"
    )
    return 0


def _cmd_symmetric_ne(args) -> int:
    start = time.perf_counter()
    game = _parse_game(args)
    result = solve_symmetric_ne(game)
    mfe = solve_single_stage_mfe(game)
    duration = time.perf_counter() - start
    manifest = RunManifest(
        "symmetric-ne",
        {
            "routes": args.routes,
            "costs": args.costs,
            "ref": args.ref,
            "alpha": args.alpha,
            "agents": args.agents,
        },
        duration_s=duration,
    )
    rows = [("q", j, result.q[j]) for j in range(game.route_count)]
    rows += [("kkt_residual", j, result.residuals[j]) for j in range(game.route_count)]
    rows += [("mfe", j, mfe[j]) for j in range(game.route_count)]
    rows.append(("lambda", -1, result.lam))
    write_csv(args.out, "record,route,value", rows, manifest)
    print(f"symmetric equilibrium: {np.array2string(np.asarray(result.q), precision=6)}")
    return 0


def _cmd_gridworld(args) -> int:
    obstacles = [int(tok) for tok in args.obstacles.split(",") if tok.strip()] if args.obstacles else []
    scenario = build_gridworld(
        args.width, args.height, obstacles, args.origin, args.dest, args.horizon, args.alpha
    )
    write_scenario(scenario, args.out)
    print(f"wrote {args.width} x {args.height} grid-world scenario to {args.out}")
    return 0


def _cmd_reproduce(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.preset == "fig2":
        start = time.perf_counter()
        scenario = fig2_scenario(args.alpha)
        solution = mfe_solve(scenario)
        duration = time.perf_counter() - start
        manifest = RunManifest("reproduce fig2", {"alpha": args.alpha}, duration_s=duration)
        for t in FIG2_FRAMES:
            text = emit_heatmap(
                solution.flow,
                t,
                FIG2_WIDTH,
                FIG2_HEIGHT,
                FIG2_OBSTACLES,
                manifest.header_lines(),
            )
            (out_dir / f"heatmap_t{t}.pgm").write_text(text, encoding="utf-8")
        rows = [
            (t, i, solution.flow.distributions[t, i])
            for t in range(scenario.horizon + 1)
            for i in range(scenario.graph.node_count)
        ]
        write_csv(out_dir / "flow.csv", "t,i,mass", rows, manifest)
        print(f"wrote {len(FIG2_FRAMES)} heatmap frames and flow.csv to {out_dir}")
        return 0

    # fig4: fictitious play at both population sizes
    for n_players in FIG4_PLAYERS:
        game = SingleStageGame(
            np.array(FIG4_COSTS), np.array(FIG4_REFERENCE), FIG4_ALPHA, n_players
        )
        start = time.perf_counter()
        initial = np.full(game.route_count, 1.0 / game.route_count)
        result = fp_run(game, initial, args.days)
        duration = time.perf_counter() - start
        manifest = RunManifest(
            "reproduce fig4", {"agents": n_players, "days": args.days}, duration_s=duration
        )
        rows = []
        for d in range(len(result.path.beliefs)):
            choice = result.path.choices[d] if d < len(result.path.choices) else -1
            rows.append(
                (d + 1, *result.path.beliefs[d], choice, result.dist_to_finite_ne[d], result.dist_to_mfe[d])
            )
        belief_cols = ",".join(f"q{j + 1}" for j in range(game.route_count))
        write_csv(out_dir / f"fp_n{n_players}.csv", f"day,{belief_cols},r,dist_to_ne,dist_to_mfe", rows, manifest)
    print(f"wrote fictitious play paths for N in {FIG4_PLAYERS} to {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=PROG,
        description="Mean-field traffic routing under a log-population toll.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p, scenario=True):
        if scenario:
            p.add_argument("--scenario", required=True, help="scenario file path")
        p.add_argument("--seed", type=int, default=0, help="root RNG seed")
        p.add_argument("--threads", type=int, default=0, help="worker threads, 0 = auto")

    p = sub.add_parser("validate", help="check a scenario file against all invariants")
    common(p)

    p = sub.add_parser("solve", help="backward pass and optimal policy extraction")
    common(p)
    p.add_argument("--out-policy", help="write the optimal policy CSV (t,i,j,value)")
    p.add_argument("--out-logphi", help="write the log-desirability CSV (t,i,value)")

    p = sub.add_parser("mfe", help="mean-field equilibrium policy and population flow")
    common(p)
    p.add_argument("--out-policy", help="write the equilibrium policy CSV (t,i,j,value)")
    p.add_argument("--out-flow", help="write the population flow CSV (t,i,mass)")
    p.add_argument(
        "--certify-equalizer",
        type=int,
        default=0,
        metavar="N",
        help="also check the equalizer property over N random policies",
    )

    p = sub.add_parser("simulate", help="finite-population Monte Carlo with realized tolls")
    common(p)
    p.add_argument("--policy", required=True, help="policy CSV to simulate under")
    p.add_argument("--agents", type=int, required=True, help="number of players")
    p.add_argument("--reps", type=int, default=1, help="independent replications")
    p.add_argument("--out", required=True, help="output CSV (rep,t,i,j,count,realized_tax)")

    p = sub.add_parser("nash-gap", help="expected-tax convergence and best-response gaps per N")
    common(p)
    p.add_argument("--agents", required=True, help="comma-separated player counts")
    p.add_argument("--out", required=True, help="output CSV (n_agents,expected_tax_gap,epsilon_nash)")

    p = sub.add_parser("fp", help="symmetric fictitious play on a parallel-route game")
    common(p, scenario=False)
    p.add_argument("--routes", type=int, required=True, help="number of parallel routes")
    p.add_argument("--costs", required=True, help="comma-separated route travel costs")
    p.add_argument("--ref", required=True, help="comma-separated reference probabilities")
    p.add_argument("--alpha", type=float, required=True, help="toll aggressiveness")
    p.add_argument("--agents", type=int, required=True, help="number of players")
    p.add_argument("--days", type=int, required=True, help="days to play")
    p.add_argument("--init", default="uniform", help="'uniform' or comma-separated belief")
    p.add_argument("--out", required=True, help="output CSV (day,q...,r,dist_to_ne,dist_to_mfe)")

    p = sub.add_parser("symmetric-ne", help="exact symmetric equilibrium of the route game")
    common(p, scenario=False)
    p.add_argument("--routes", type=int, required=True)
    p.add_argument("--costs", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--agents", type=int, required=True)
    p.add_argument("--out", required=True, help="output CSV (record,route,value)")

    p = sub.add_parser("gridworld", help="generate a grid-world scenario file")
    common(p, scenario=False)
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--obstacles", default="", help="comma-separated obstacle node ids")
    p.add_argument("--origin", type=int, required=True, help="origin node id")
    p.add_argument("--dest", type=int, required=True, help="destination node id")
    p.add_argument("--horizon", type=int, required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--out", required=True, help="scenario file to write")

    p = sub.add_parser("reproduce", help="rerun a packaged experiment preset")
    p.add_argument("preset", choices=("fig2", "fig4"))
    p.add_argument("--alpha", type=float, default=0.1, help="toll aggressiveness (fig2)")
    p.add_argument("--days", type=int, default=FIG4_DAYS, help="days to play (fig4)")
    p.add_argument("--out-dir", required=True, help="directory for output files")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=0)

    return parser


_HANDLERS = {
    "validate": _cmd_validate,
    "solve": _cmd_solve,
    "mfe": _cmd_mfe,
    "simulate": _cmd_simulate,
    "nash-gap": _cmd_nash_gap,
    "fp": _cmd_fp,
    "symmetric-ne": _cmd_symmetric_ne,
    "gridworld": _cmd_gridworld,
    "reproduce": _cmd_reproduce,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _HANDLERS[args.subcommand](args)
    except (ScenarioFormatError, InvalidScenarioError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
