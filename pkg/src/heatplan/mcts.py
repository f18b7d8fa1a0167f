"""UCB1 Monte Carlo tree search over the on/off action space.

Every decision grows a fresh tree from the current tank state. Nodes live in
flat arrays sized to the simulation budget (one expansion per simulation),
which keeps the inner loop inside numba. Rollouts pick on/off uniformly at
random through the same Euler update and reward terms as the environment.

Random bits come from SplitMix64 (Steele, Lea & Flood 2014): a 64-bit
counter advanced by 0x9E3779B97F4A7C15 and passed through a fixed
xor-shift/multiply finaliser. The stream for one decision is seeded with
``seed ^ time_index``, so results only depend on (spec, config, seed).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import IO

import numpy as np
from numba import njit

from .env import EpisodeResult, EpisodeSpec, HeaterEnv, RewardParams

OFF, ON = 0, 1


@dataclass(frozen=True)
class MctsConfig:
    n_simulations: int = 25_000
    c_ucb: float = math.sqrt(2.0)
    rng_seed: int = 0
    max_rollout_depth: int | None = None  # None: roll out to the deadline

    def __post_init__(self) -> None:
        if self.n_simulations < 1:
            raise ValueError("n_simulations must be >= 1")
        if self.c_ucb < 0:
            raise ValueError("c_ucb must be >= 0")
        if self.max_rollout_depth is not None and self.max_rollout_depth < 0:
            raise ValueError("max_rollout_depth must be >= 0")


@dataclass(frozen=True)
class RootStats:
    """Visit counts and mean returns of the two root children after a search."""

    visits: tuple[int, int]
    q: tuple[float, float]
    chosen: int
    root_visits: int



@njit(cache=True)
def _splitmix64(state):
    state = state + np.uint64(0x9E3779B97F4A7C15)
    z = state
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    z = z ^ (z >> np.uint64(31))
    return state, z


@njit(cache=True)
def ucb1_score(total_return, visits, parent_visits, c):
    """Mean return plus the UCB1 exploration bonus; unvisited children score +inf."""
    if visits == 0:
        return np.inf
    return total_return / visits + c * math.sqrt(math.log(parent_visits) / visits)


@njit(cache=True)
def _euler(t, power, k, eta, h, area, ta):
    # same operand order as thermal.step_temperature
    return t + k * (eta * power - h * area * (t - ta))


@njit(cache=True)
def _rollout(temp, time, deadline, depth_limit, rng_state, k, eta, h, area, ta, p_on, dt, alpha, beta, target, actions_out):
    """Uniform-random playout; returns (reward-to-go, rng_state, steps taken)."""
    g = 0.0
    word = np.uint64(0)
    bits_left = 0
    n = 0
    while time < deadline and n < depth_limit:
        if bits_left == 0:
            rng_state, word = _splitmix64(rng_state)
            bits_left = 64
        a = int(word & np.uint64(1))
        word = word >> np.uint64(1)
        bits_left -= 1
        power = p_on if a == 1 else 0.0
        temp = _euler(temp, power, k, eta, h, area, ta)
        time += 1
        r = -alpha * (power * dt)
        if time == deadline:
            r += -beta * abs(target - temp)
        g += r
        actions_out[n] = a
        n += 1
    return g, rng_state, n


@njit(cache=True, nogil=True)
def _search(temp0, time0, deadline, n_sims, c, seed, depth_limit, k, eta, h, area, ta, p_on, dt, alpha, beta, target):
    cap = n_sims + 1
    visits = np.zeros(cap, dtype=np.int64)
    totals = np.zeros(cap, dtype=np.float64)
    children = np.full((cap, 2), -1, dtype=np.int64)
    temps = np.empty(cap, dtype=np.float64)
    times = np.empty(cap, dtype=np.int64)
    temps[0] = temp0
    times[0] = time0
    n_nodes = 1

    horizon = deadline - time0 + 1
    path = np.empty(horizon, dtype=np.int64)
    edge_r = np.empty(horizon, dtype=np.float64)
    scratch = np.empty(horizon, dtype=np.int64)
    rng_state, _ = _splitmix64(np.uint64(seed))

    for _ in range(n_sims):
        node = 0
        depth = 0
        path[0] = 0
        expanded = False
        while times[node] < deadline and not expanded:
            if children[node, 0] == -1:
                a = 0
                expanded = True
            elif children[node, 1] == -1:
                a = 1
                expanded = True
            else:
                n_parent = visits[node]
                c0 = children[node, 0]
                c1 = children[node, 1]
                s0 = ucb1_score(totals[c0], visits[c0], n_parent, c)
                s1 = ucb1_score(totals[c1], visits[c1], n_parent, c)
                a = 1 if s1 > s0 else 0
            power = p_on if a == 1 else 0.0
            if expanded:
                child = n_nodes
                n_nodes += 1
                children[node, a] = child
                temps[child] = _euler(temps[node], power, k, eta, h, area, ta)
                times[child] = times[node] + 1
            else:
                child = children[node, a]
            r = -alpha * (power * dt)
            if times[child] == deadline:
                r += -beta * abs(target - temps[child])
            edge_r[depth] = r
            depth += 1
            path[depth] = child
            node = child

        g, rng_state, _ = _rollout(
            temps[node], times[node], deadline, depth_limit, rng_state,
            k, eta, h, area, ta, p_on, dt, alpha, beta, target, scratch,
        )
        # Each node accumulates the return earned from its parent's state onward.
        for i in range(depth, 0, -1):
            g += edge_r[i - 1]
            visits[path[i]] += 1
            totals[path[i]] += g
        visits[0] += 1
        totals[0] += g

    out_visits = np.zeros(2, dtype=np.int64)
    out_totals = np.zeros(2, dtype=np.float64)
    for a in range(2):
        ch = children[0, a]
        if ch >= 0:
            out_visits[a] = visits[ch]
            out_totals[a] = totals[ch]
    return out_visits, out_totals, visits[0]


def _kernel_args(spec: EpisodeSpec, reward: RewardParams) -> tuple:
    p = spec.params
    return (
        p.dt_s / (p.mass_kg * p.cp), p.eta, p.h, p.area_m2, p.t_ambient_c,
        p.p_on_w, p.dt_s, reward.alpha, reward.beta, float(spec.t_target_c),
    )


def decision_seed(seed: int, time_index: int) -> int:
    return (int(seed) ^ int(time_index)) & 0xFFFFFFFFFFFFFFFF


def search(temp: float, time_index: int, spec: EpisodeSpec, cfg: MctsConfig = MctsConfig(),
           reward: RewardParams | None = None) -> RootStats:
    """Grow a tree from ``(temp, time_index)`` and report root-child statistics."""
    if not 0 <= time_index < spec.deadline_steps:
        raise ValueError(f"time_index {time_index} outside [0, {spec.deadline_steps})")
    reward = reward or RewardParams()
    depth = spec.deadline_steps if cfg.max_rollout_depth is None else cfg.max_rollout_depth
    visits, totals, root_n = _search(
        float(temp), int(time_index), int(spec.deadline_steps), int(cfg.n_simulations),
        float(cfg.c_ucb), np.uint64(decision_seed(cfg.rng_seed, time_index)), int(depth),
        *_kernel_args(spec, reward),
    )
    n_off, n_on = int(visits[0]), int(visits[1])
    q = tuple(float(totals[a] / visits[a]) if visits[a] else math.nan for a in (0, 1))
    chosen = ON if n_on > n_off else OFF
    return RootStats((n_off, n_on), q, chosen, int(root_n))


def plan_action(temp: float, time_index: int, spec: EpisodeSpec, cfg: MctsConfig = MctsConfig(),
                reward: RewardParams | None = None) -> int:
    """Most-visited root action after ``cfg.n_simulations`` simulations; ties go to off."""
    return search(temp, time_index, spec, cfg, reward).chosen


def rollout_return(temp: float, time_index: int, spec: EpisodeSpec, seed: int,
                   reward: RewardParams | None = None) -> tuple[float, list[int]]:
    """One uniform-random playout to the deadline, as used inside the search."""
    reward = reward or RewardParams()
    horizon = spec.deadline_steps - time_index
    actions = np.zeros(max(horizon, 1), dtype=np.int64)
    state, _ = _splitmix64(np.uint64(seed))
    g, _, n = _rollout(float(temp), int(time_index), int(spec.deadline_steps), horizon, state,
                       *_kernel_args(spec, reward), actions)
    return float(g), [int(a) for a in actions[:n]]


def run_mcts_episode(spec: EpisodeSpec, cfg: MctsConfig = MctsConfig(), reward: RewardParams | None = None,
                     trace: IO[str] | None = None) -> EpisodeResult:
    """Closed-loop episode re-planning from scratch at every step.

    If ``trace`` is given, one JSON object per step is written to it with the
    root visit counts, mean returns and the chosen action.
    """
    env = HeaterEnv(reward)
    obs = env.reset(spec)
    done = False
    while not done:
        t = spec.deadline_steps - obs.steps_remaining
        stats = search(obs.t_c, t, spec, cfg, env.reward_params)
        if trace is not None:
            trace.write(json.dumps({
                "step": t,
                "root_visits": list(stats.visits),
                "q": list(stats.q),
                "chosen": stats.chosen,
            }) + "\n")
        out = env.step(stats.chosen)
        obs, done = out.obs, out.done
    return env.result()


def mcts_controller(spec: EpisodeSpec, cfg: MctsConfig = MctsConfig(), reward: RewardParams | None = None):
    """Observation -> action callable for use with ``run_controller``."""

    def act(obs):
        return plan_action(obs.t_c, spec.deadline_steps - obs.steps_remaining, spec, cfg, reward)

    return act
