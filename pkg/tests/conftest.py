import numpy as np
import pytest

from utils import error_logger
from utils.game_logic import SymmetricGame, money_request_variant


@pytest.fixture(autouse=True)
def _isolated_error_log(tmp_path, monkeypatch):
    monkeypatch.setattr(error_logger.error_tracker, "log_dir", str(tmp_path / "logs"))


@pytest.fixture
def basic_game():
    return money_request_variant("basic")


@pytest.fixture
def cycle_game():
    return money_request_variant("cycle")


@pytest.fixture
def costless_game():
    return money_request_variant("costless")


@pytest.fixture
def stag_hunt():
    return SymmetricGame.from_matrix(np.array([[4, 0], [3, 3]]), actions=("A", "B"), name="stag hunt")


@pytest.fixture
def coordination_game():
    return SymmetricGame.from_matrix(np.array([[1, 0], [0, 1]]), name="coordination")


@pytest.fixture
def cache_dir(tmp_path):
    path = tmp_path / "cache"
    path.mkdir()
    return str(path)
