"""Finite-horizon heating episode: observation, reward and energy accounting."""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .thermal import DEFAULT_PARAMS, TEMP_MAX_C, TEMP_MIN_C, TankParams, deviation_after_schedule, step_temperature


class SpecError(ValueError):
    """An episode or reward configuration violates its invariants."""


class EpisodeFinishedError(RuntimeError):
    """``step`` was called on an episode that already reached its deadline."""


class Action(enum.IntEnum):
    OFF = 0
    ON = 1


@dataclass(frozen=True)
class EpisodeSpec:
    """One experiment instance: start and target temperatures plus a deadline in steps."""

    t0_c: float
    t_target_c: float
    deadline_steps: int
    band_c: float = 1.0
    tol_steps: int = 1
    params: TankParams = DEFAULT_PARAMS

    def __post_init__(self) -> None:
        if not (math.isfinite(self.t0_c) and math.isfinite(self.t_target_c)):
            raise SpecError("t0_c and t_target_c must be finite")
        if not TEMP_MIN_C <= self.t0_c <= TEMP_MAX_C:
            raise SpecError(f"t0_c={self.t0_c} outside [{TEMP_MIN_C}, {TEMP_MAX_C}]")
        if int(self.deadline_steps) != self.deadline_steps or self.deadline_steps < 1:
            raise SpecError(f"deadline_steps must be an integer >= 1, got {self.deadline_steps}")
        if not self.band_c > 0:
            raise SpecError("band_c must be positive")
        if int(self.tol_steps) != self.tol_steps or self.tol_steps < 1:
            raise SpecError("tol_steps must be an integer >= 1")

    def within_band(self, temp_c: float) -> bool:
        return abs(temp_c - self.t_target_c) <= self.band_c


@dataclass(frozen=True)
class RewardParams:
    """Energy penalty per joule and terminal penalty per °C of error."""

    alpha: float = 1.86e-8
    beta: float = 0.03

    def __post_init__(self) -> None:
        if self.alpha < 0 or self.beta < 0:
            raise SpecError("alpha and beta must be non-negative")
        self.check_dominance(DEFAULT_PARAMS)

    def check_dominance(self, params: TankParams) -> None:
        """One extra on-step must cost less than a 1 °C terminal improvement is worth.

        Uses the heat delivered to the water, eta * P_on * dt.
        """
        cost = self.alpha * params.delivered_step_energy_j
        if not cost < self.beta * 1.0:
            raise SpecError(f"alpha*E_step = {cost:.5f} must be < beta*1°C = {self.beta:.5f}")


class Observation(NamedTuple):
    t_c: float
    t_target_c: float
    t_ambient_c: float
    steps_remaining: int


@dataclass(frozen=True)
class StepOutcome:
    obs: Observation
    reward: float
    energy_j: float
    done: bool


@dataclass
class EpisodeResult:
    spec: EpisodeSpec
    temps: list[float]
    actions: list[int]
    rewards: list[float]
    energy_wh: float
    terminal_temp_c: float
    success: bool
    episode_return: float

    @property
    def on_steps(self) -> int:
        return sum(self.actions)

    def write_csv(self, path: str | Path) -> None:
        write_trajectory_csv(self, path)


def terminal_penalty(spec: EpisodeSpec, rp: RewardParams, temp_c: float) -> float:
    return -rp.beta * abs(spec.t_target_c - temp_c)


class HeaterEnv:
    """Stepwise control loop over a single tank.

    One instance holds a mutable clock, so it must not be shared between
    threads; create one per concurrent episode.
    """

    def __init__(self, reward: RewardParams | None = None):
        self.reward_params = reward or RewardParams()
        self.spec: EpisodeSpec | None = None
        self.t = 0
        self.temp_c = math.nan
        self.done = True
        self._temps: list[float] = []
        self._actions: list[int] = []
        self._rewards: list[float] = []

    def reset(self, spec: EpisodeSpec) -> Observation:
        if not isinstance(spec, EpisodeSpec):
            raise SpecError("reset() needs an EpisodeSpec")
        self.reward_params.check_dominance(spec.params)
        self.spec = spec
        self.t = 0
        self.temp_c = float(spec.t0_c)
        self.done = False
        self._temps = [self.temp_c]
        self._actions = []
        self._rewards = []
        return self.observation()

    def observation(self) -> Observation:
        spec = self.spec
        return Observation(self.temp_c, spec.t_target_c, spec.params.t_ambient_c, spec.deadline_steps - self.t)

    def step(self, action: int) -> StepOutcome:
        if self.spec is None:
            raise EpisodeFinishedError("call reset() before step()")
        if self.done:
            raise EpisodeFinishedError("episode already reached its deadline; call reset()")
        a = int(action)
        if a not in (0, 1):
            raise ValueError(f"action must be 0 (off) or 1 (on), got {action!r}")
        spec, rp = self.spec, self.reward_params
        params = spec.params
        power = params.p_on_w if a else params.p_off_w
        temp = step_temperature(self.temp_c, power, params)
        if not TEMP_MIN_C <= temp <= TEMP_MAX_C:
            raise FloatingPointError(f"temperature {temp:.3f} °C left the physical range")
        energy_j = power * params.dt_s
        self.t += 1
        reward = -rp.alpha * energy_j
        self.done = self.t == spec.deadline_steps
        if self.done:
            reward += terminal_penalty(spec, rp, temp)
        self.temp_c = temp
        self._temps.append(temp)
        self._actions.append(a)
        self._rewards.append(reward)
        return StepOutcome(self.observation(), reward, energy_j, self.done)

    def result(self) -> EpisodeResult:
        """Summary of the episode so far; normally called once ``done`` is set."""
        spec = self.spec
        on = sum(self._actions)
        return EpisodeResult(
            spec=spec,
            temps=list(self._temps),
            actions=list(self._actions),
            rewards=list(self._rewards),
            energy_wh=spec.params.step_energy_wh * on,
            terminal_temp_c=self.temp_c,
            success=spec.within_band(self.temp_c),
            episode_return=float(sum(self._rewards)),
        )


def rollout_schedule(spec: EpisodeSpec, schedule, reward: RewardParams | None = None) -> EpisodeResult:
    """Play a fixed open-loop schedule through a fresh environment."""
    schedule = list(schedule)
    if len(schedule) != spec.deadline_steps:
        raise SpecError(f"schedule length {len(schedule)} != deadline {spec.deadline_steps}")
    env = HeaterEnv(reward)
    env.reset(spec)
    for a in schedule:
        env.step(a)
    return env.result()


def max_energy_penalty(deadline_steps: int, params: TankParams = DEFAULT_PARAMS, rp: RewardParams | None = None) -> float:
    """Energy part of the worst-case return: every step on."""
    rp = rp or RewardParams()
    return rp.alpha * params.step_energy_j * deadline_steps


def episode_return_bounds(spec: EpisodeSpec, rp: RewardParams | None = None) -> tuple[float, float]:
    """Interval guaranteed to contain the return of any episode under ``spec``.

    The upper end is 0 since both reward terms are penalties. The lower end
    adds the all-on energy cost to the largest terminal error reachable,
    which lies at one of the all-off / all-on extremes because the terminal
    temperature is monotone in every action.
    """
    rp = rp or RewardParams()
    d = spec.deadline_steps
    coldest = deviation_after_schedule(spec.t0_c, [0] * d, spec.params)
    hottest = deviation_after_schedule(spec.t0_c, [1] * d, spec.params)
    worst_err = max(abs(spec.t_target_c - coldest), abs(spec.t_target_c - hottest))
    return -(max_energy_penalty(d, spec.params, rp) + rp.beta * worst_err), 0.0


TRAJECTORY_HEADER = ["step", "temp_c", "action", "power_w", "reward", "cum_energy_wh"]


def write_trajectory_csv(result: EpisodeResult, path: str | Path) -> None:
    """One row per executed step; ``temp_c`` is the temperature after the step."""
    params = result.spec.params
    cum = 0.0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJECTORY_HEADER)
        for i, (a, r) in enumerate(zip(result.actions, result.rewards)):
            power = params.p_on_w if a else params.p_off_w
            cum += power * params.dt_s / 3600.0
            w.writerow([i + 1, f"{result.temps[i + 1]:.6f}", a, f"{power:g}", repr(float(r) + 0.0), f"{cum:.6f}"])


def read_trajectory_csv(path: str | Path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if rows and list(rows[0].keys()) != TRAJECTORY_HEADER:
        raise ValueError(f"{path}: not a trajectory CSV")
    return {k: np.array([float(r[k]) for r in rows]) for k in TRAJECTORY_HEADER}
