"""Bang-bang baseline and the exact minimal-energy schedule.

The oracle relies on linearity of the tank update: an on-step taken at time
``t`` raises the deadline temperature by ``b * a**(D-1-t)``, so for a fixed
number of on-steps the terminal temperature is largest when they are packed
at the end. Minimal energy is then the smallest on-count whose late-packed
schedule reaches the service band.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .env import EpisodeResult, EpisodeSpec, HeaterEnv, Observation, RewardParams
from .thermal import deviation_after_schedule, terminal_temperatures

Controller = Callable[[Observation], int]

BRUTE_FORCE_MAX_STEPS = 20


@dataclass(frozen=True)
class OracleResult:
    schedule: tuple[int, ...]
    on_count: int
    energy_wh: float
    predicted_terminal_c: float
    feasible: bool


def bang_bang_action(obs: Observation) -> int:
    """Full power below the target, off at or above it."""
    return 1 if obs.t_c < obs.t_target_c else 0


def _result(spec: EpisodeSpec, schedule, feasible: bool) -> OracleResult:
    schedule = tuple(int(u) for u in schedule)
    on = sum(schedule)
    return OracleResult(
        schedule=schedule,
        on_count=on,
        energy_wh=spec.params.step_energy_wh * on,
        predicted_terminal_c=deviation_after_schedule(spec.t0_c, schedule, spec.params),
        feasible=feasible,
    )


def _late_block(d: int, k: int) -> list[int]:
    return [0] * (d - k) + [1] * k


def just_in_time_schedule(spec: EpisodeSpec) -> OracleResult:
    """Minimal on-count schedule landing inside the terminal band.

    Idles first and heats in a final block. If the first block length that
    reaches the lower band edge overshoots the upper edge, on-steps are
    moved earlier one position at a time (each move scales that step's
    contribution by the decay factor) until the terminal temperature drops
    into the band.
    """
    d = spec.deadline_steps
    lo = spec.t_target_c - spec.band_c
    hi = spec.t_target_c + spec.band_c
    temp = lambda s: deviation_after_schedule(spec.t0_c, s, spec.params)  # noqa: E731

    k = 0
    while k <= d and temp(_late_block(d, k)) < lo:
        k += 1
    if k > d:
        return _result(spec, [1] * d, False)

    schedule = _late_block(d, k)
    best = schedule
    if temp(schedule) <= hi:
        return _result(spec, schedule, True)

    # Overshoot: walk on-steps towards the start, earliest first.
    positions = list(range(d - k, d))
    for j in range(k):
        floor = j  # j-th on-step can go no earlier than index j
        while positions[j] > floor:
            positions[j] -= 1
            schedule = [0] * d
            for p in positions:
                schedule[p] = 1
            t_end = temp(schedule)
            if abs(t_end - spec.t_target_c) < abs(temp(best) - spec.t_target_c):
                best = schedule
            if lo <= t_end <= hi:
                return _result(spec, schedule, True)
    candidates = [best]
    if k > 0:
        candidates.append(_late_block(d, k - 1))
    best = min(candidates, key=lambda s: abs(temp(s) - spec.t_target_c))
    return _result(spec, best, False)


def _all_schedules(d: int) -> tuple[np.ndarray, np.ndarray]:
    """Every 0/1 schedule of length ``d`` as rows; row ``i`` has bit ``t`` of ``i`` at step ``t``."""
    codes = np.arange(1 << d, dtype=np.int64)
    bits = ((codes[:, None] >> np.arange(d, dtype=np.int64)) & 1).astype(np.float64)
    return codes, bits


def brute_force_schedule(spec: EpisodeSpec) -> OracleResult:
    """Exhaustive search over all 2**D schedules.

    Among feasible schedules with the fewest on-steps, picks the one whose
    on-steps sit latest, i.e. the largest code ``sum(u_t * 2**t)``. With no
    feasible schedule, returns the one closest to the target (fewest
    on-steps, then latest, on ties).
    """
    d = spec.deadline_steps
    if d > BRUTE_FORCE_MAX_STEPS:
        raise ValueError(f"brute force limited to deadline <= {BRUTE_FORCE_MAX_STEPS} steps, got {d}")
    codes, bits = _all_schedules(d)
    terminal = terminal_temperatures(spec.t0_c, bits, spec.params)
    on = bits.sum(axis=1).astype(np.int64)
    err = np.abs(terminal - spec.t_target_c)
    feasible = err <= spec.band_c
    if feasible.any():
        # lexsort: last key is primary
        order = np.lexsort((-codes, on, ~feasible))
    else:
        order = np.lexsort((-codes, on, err))
    pick = order[0]
    return _result(spec, bits[pick].astype(int), bool(feasible[pick]))


def run_controller(spec: EpisodeSpec, controller: Controller, reward: RewardParams | None = None) -> EpisodeResult:
    """Closed-loop rollout of ``controller`` from ``spec``'s initial state."""
    env = HeaterEnv(reward)
    obs = env.reset(spec)
    done = False
    while not done:
        out = env.step(controller(obs))
        obs, done = out.obs, out.done
    return env.result()


def schedule_controller(schedule) -> Controller:
    """Wrap an open-loop schedule as an observation -> action callable."""
    schedule = tuple(schedule)
    d = len(schedule)

    def act(obs: Observation) -> int:
        return schedule[d - obs.steps_remaining]

    return act


def always_off(obs: Observation) -> int:
    return 0
