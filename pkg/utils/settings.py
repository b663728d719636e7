"""
Environment-driven configuration.

Values come from a `.env` file (found by walking up from the working
directory) or from the process environment. Nothing here talks to the
network.
"""

import hashlib
import os
from dataclasses import asdict, dataclass, field

from dotenv import find_dotenv, load_dotenv

load_dotenv(find_dotenv())

TOOL_VERSION = "1.0.0"

# Backend
OPENAI_API_KEY = os.getenv("OPENAI_API_KEY")
OPENAI_BASE_URL = os.getenv("OPENAI_BASE_URL") or None
OPENAI_MODEL = os.getenv("OPENAI_MODEL", "gpt-4o")

# Local storage
CACHE_DIR = os.getenv("MONEY_GAMES_CACHE_DIR", "./cache")
LOG_DIR = os.getenv("MONEY_GAMES_LOG_DIR", "./logs")
DATA_DIR = os.getenv(
    "MONEY_GAMES_DATA_DIR",
    os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "data"),
)

OFFLINE = os.getenv("MONEY_GAMES_OFFLINE", "0").strip().lower() in ("1", "true", "yes")
MAX_IN_FLIGHT = int(os.getenv("MONEY_GAMES_MAX_IN_FLIGHT", "8"))

# Equilibrium enumeration budgets (per game)
EQ_ACTION_CAP = int(os.getenv("MONEY_GAMES_EQ_ACTION_CAP", "20"))
EQ_SYSTEM_BUDGET = int(os.getenv("MONEY_GAMES_EQ_SYSTEM_BUDGET", "3000000"))
EQ_TIME_BUDGET = float(os.getenv("MONEY_GAMES_EQ_TIME_BUDGET", "120"))

EPSILON_GRID = (0.05, 0.1, 0.2, 0.3)
HEADLINE_EPSILON = 0.2


@dataclass(frozen=True)
class RunConfig:
    """Snapshot of every knob that can change a run's outputs."""

    offsets: str = "4-19"
    epsilons: tuple = EPSILON_GRID
    headline_epsilon: float = HEADLINE_EPSILON
    root_seed: int = 20250101
    bootstrap_draws: int = 10_000
    permutation_iterations: int = 100_000
    ci_level: float = 0.95
    cov_type: str = "HC1"
    eq_action_cap: int = EQ_ACTION_CAP
    eq_system_budget: int = EQ_SYSTEM_BUDGET
    eq_time_budget: float = EQ_TIME_BUDGET
    trace_steps: int = 200
    model: str = OPENAI_MODEL
    temperature: float = 1.0
    max_in_flight: int = MAX_IN_FLIGHT
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        data = asdict(self)
        data["epsilons"] = list(self.epsilons)
        return data

    @classmethod
    def from_dict(cls, data):
        data = dict(data or {})
        if "epsilons" in data:
            data["epsilons"] = tuple(float(e) for e in data["epsilons"])
        known = {k: v for k, v in data.items() if k in cls.__dataclass_fields__}
        return cls(**known)


def data_path(*parts):
    return os.path.join(DATA_DIR, *parts)


def derive_seed(root, component, purpose, index=0):
    """Stable 63-bit seed for one (component, purpose, index) under a root seed."""
    digest = hashlib.sha256(f"{root}|{component}|{purpose}|{index}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1
