from __future__ import annotations

import numpy as np
import pytest

from mftroute import SingleStageGame
from mftroute.cli import three_route_scenario


@pytest.fixture
def three_route():
    """One-stage network form of the three parallel-route game."""
    return three_route_scenario()


@pytest.fixture
def three_route_game():
    def make(n_players: int) -> SingleStageGame:
        return SingleStageGame(
            np.array([2.0, 1.0, 3.0]), np.array([1.0, 1.0, 1.0]) / 3.0, 1.0, n_players
        )

    return make
