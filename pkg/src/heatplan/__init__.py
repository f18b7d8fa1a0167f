"""Deadline-aware immersion water-heater control benchmark.

One deterministic tank simulator shared by four controllers: a bang-bang
relay, an exact minimal-energy schedule, UCB1 tree search and a PPO policy.
"""

__version__ = "0.1.0"

from .controllers import OracleResult, bang_bang_action, brute_force_schedule, just_in_time_schedule, run_controller
from .env import EpisodeResult, EpisodeSpec, HeaterEnv, Observation, RewardParams, StepOutcome
from .thermal import DEFAULT_PARAMS, TankParams, cooling_factor, max_steady_temperature, step_temperature

__all__ = [
    "DEFAULT_PARAMS",
    "EpisodeResult",
    "EpisodeSpec",
    "HeaterEnv",
    "Observation",
    "OracleResult",
    "RewardParams",
    "StepOutcome",
    "TankParams",
    "bang_bang_action",
    "brute_force_schedule",
    "cooling_factor",
    "just_in_time_schedule",
    "max_steady_temperature",
    "run_controller",
    "step_temperature",
]
