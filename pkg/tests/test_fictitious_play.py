from __future__ import annotations

import math

import numpy as np
import pytest

from helpers import exact_expected_log_share
from mftroute import BeliefPath, SingleStageGame, assumed_cost, expected_tax_symmetric, fp_run, fp_step


def test_game_construction_rejects_bad_inputs():
    with pytest.raises(ValueError):
        SingleStageGame(np.array([1.0]), np.array([1.0]), 1.0, 10)
    with pytest.raises(ValueError):
        SingleStageGame(np.array([1.0, 2.0]), np.array([0.0, 1.0]), 1.0, 10)
    with pytest.raises(ValueError):
        SingleStageGame(np.array([1.0, 2.0]), np.array([0.6, 0.6]), 1.0, 10)
    with pytest.raises(ValueError):
        SingleStageGame(np.array([1.0, 2.0]), np.array([0.5, 0.5]), -1.0, 10)


def test_assumed_cost_single_player(three_route_game):
    game = three_route_game(1)
    y = assumed_cost(game, np.array([0.2, 0.5, 0.3]))
    np.testing.assert_allclose(y, game.travel_cost + math.log(3), rtol=0, atol=1e-14)


def test_assumed_cost_certain_route(three_route_game):
    game = three_route_game(50)
    y = assumed_cost(game, np.array([0.0, 1.0, 0.0]))
    # a fully crowded route costs travel plus the reference surcharge
    assert y[1] == pytest.approx(game.travel_cost[1] + math.log(3), abs=1e-13)


def test_assumed_cost_consistent_with_exact_tax_machinery(three_route_game):
    game = three_route_game(200)
    belief = np.array([1 / 3, 1 / 3, 1 / 3])
    y = assumed_cost(game, belief)
    for j in range(3):
        tax = expected_tax_symmetric(200, 1.0, float(belief[j]), float(game.reference[j]), 1.0)
        assert y[j] == pytest.approx(game.travel_cost[j] + tax, abs=1e-12)
        oracle = exact_expected_log_share(200, float(belief[j])) - math.log(1 / 3)
        assert y[j] == pytest.approx(game.travel_cost[j] + oracle, abs=1e-10)


def test_first_day_best_response_picks_the_cheap_route(three_route_game):
    game = three_route_game(100)
    path = BeliefPath.start(np.full(3, 1 / 3))
    fp_step(game, path)
    assert path.choices == [1]  # the middle route has the lowest travel cost


def test_exact_tie_breaks_to_the_lowest_route_index():
    game = SingleStageGame(np.array([2.0, 2.0, 2.0]), np.full(3, 1 / 3), 1.0, 25)
    path = BeliefPath.start(np.full(3, 1 / 3))
    fp_step(game, path)
    assert path.choices == [0]


def test_belief_update_is_exact_averaging():
    game = SingleStageGame(np.array([1.0, 1.0]), np.array([0.5, 0.5]), 1.0, 12)
    path = BeliefPath.start(np.array([1.0, 0.0]))
    fp_step(game, path)
    # day one: everyone believed route 1 was crowded, so route 2 was chosen
    assert path.choices == [1]
    np.testing.assert_array_equal(path.beliefs[1], [0.5, 0.5])


def test_averaging_identity_holds_to_near_machine_precision(three_route_game):
    game = three_route_game(60)
    path = BeliefPath.start(np.array([0.7, 0.1, 0.2]))
    for _ in range(400):
        fp_step(game, path)
    for day in range(1, len(path.beliefs)):
        prev = path.beliefs[day - 1]
        pulse = np.zeros(3)
        pulse[path.choices[day - 1]] = 1.0
        # same identity, different association, so rounding paths differ
        expected = prev * (day / (day + 1)) + pulse / (day + 1)
        assert np.max(np.abs(path.beliefs[day] - expected)) <= 1e-14


def test_step_size_identity(three_route_game):
    game = three_route_game(35)
    path = BeliefPath.start(np.full(3, 1 / 3))
    for _ in range(300):
        fp_step(game, path)
    for day in range(1, len(path.beliefs)):
        jump = np.abs(path.beliefs[day] - path.beliefs[day - 1]).sum()
        held = path.beliefs[day - 1][path.choices[day - 1]]
        assert jump == pytest.approx(2.0 / (day + 1) * (1.0 - held), abs=1e-14)


def test_beliefs_stay_on_the_simplex(three_route_game):
    game = three_route_game(20)
    result = fp_run(game, np.array([0.9, 0.05, 0.05]), days=500)
    beliefs = np.array(result.path.beliefs)
    assert np.all(beliefs >= 0)
    np.testing.assert_allclose(beliefs.sum(axis=1), 1.0, rtol=0, atol=1e-12)


def test_single_day_run_is_one_step(three_route_game):
    game = three_route_game(10)
    initial = np.full(3, 1 / 3)
    result = fp_run(game, initial, days=1)
    path = BeliefPath.start(initial)
    fp_step(game, path)
    assert len(result.path.beliefs) == 2
    np.testing.assert_array_equal(result.path.beliefs[1], path.beliefs[1])
    assert result.dist_to_mfe.shape == (2,)


def test_large_population_converges_near_the_mean_field_point(three_route_game):
    result = fp_run(three_route_game(200), np.full(3, 1 / 3), days=2000)
    assert result.dist_to_finite_ne[-1] <= 0.01
    assert result.dist_to_mfe[-1] <= 0.05


def test_small_population_shows_the_equilibrium_offset(three_route_game):
    result = fp_run(three_route_game(20), np.full(3, 1 / 3), days=4000)
    assert result.dist_to_mfe[-1] > result.dist_to_finite_ne[-1]


def test_smoothed_distance_to_equilibrium_is_nonincreasing(three_route_game):
    result = fp_run(three_route_game(50), np.full(3, 1 / 3), days=3000)
    window = 100
    dist = result.dist_to_finite_ne[1:]  # drop the arbitrary initial belief
    n_windows = len(dist) // window
    means = dist[: n_windows * window].reshape(n_windows, window).mean(axis=1)
    assert np.all(np.diff(means) <= 1e-12)


def test_run_rejects_bad_arguments(three_route_game):
    with pytest.raises(ValueError):
        fp_run(three_route_game(10), np.array([0.5, 0.2, 0.2]), days=10)
    with pytest.raises(ValueError):
        fp_run(three_route_game(10), np.full(3, 1 / 3), days=0)
