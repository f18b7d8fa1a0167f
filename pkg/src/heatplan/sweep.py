"""One-dimensional experiment sweeps over all controllers under identical physics."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
import time
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .controllers import bang_bang_action, just_in_time_schedule, run_controller, schedule_controller
from .env import EpisodeResult, EpisodeSpec, RewardParams
from .mcts import MctsConfig, run_mcts_episode
from .thermal import DEFAULT_PARAMS, TankParams

AXES = {
    "initial_temp": "t0_c",
    "deadline": "deadline_steps",
    "target_temp": "t_target_c",
}
DEFAULT_GRIDS = {
    "initial_temp": (10.0, 15.0, 20.0, 25.0, 30.0),
    "deadline": (30, 45, 60, 75, 90),
    "target_temp": (40.0, 50.0, 60.0, 70.0, 80.0),
}
DEFAULT_FIXED = {"t0_c": 20.0, "t_target_c": 60.0, "deadline_steps": 60}
CONTROLLERS = ("bangbang", "mcts", "ppo", "oracle")
STOCHASTIC = {"mcts"}

RESULTS_HEADER = [
    "controller", "t0_c", "t_target_c", "deadline_steps", "seed", "energy_wh",
    "terminal_temp_c", "success", "on_steps", "episode_return", "wall_ms",
]


class SweepConfigError(ValueError):
    """The sweep cannot start: unknown axis/controller or a missing policy."""


@dataclass(frozen=True)
class SweepSpec:
    axis: str
    values: tuple | None = None  # None: the default grid for ``axis``
    fixed: dict = field(default_factory=lambda: dict(DEFAULT_FIXED))
    controllers: tuple[str, ...] = CONTROLLERS
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    policy_path: str | None = None
    mcts: MctsConfig = MctsConfig()
    params: TankParams = DEFAULT_PARAMS
    band_c: float = 1.0
    ppo_sample: bool = False
    jobs: int = 1

    def grid(self) -> tuple:
        return tuple(self.values) if self.values is not None else DEFAULT_GRIDS[self.axis]

    def validate(self) -> None:
        if self.axis not in AXES:
            raise SweepConfigError(f"unknown axis {self.axis!r}; choose from {sorted(AXES)}")
        unknown = [c for c in self.controllers if c not in CONTROLLERS]
        if unknown:
            raise SweepConfigError(f"unknown controller(s) {unknown}; choose from {list(CONTROLLERS)}")
        if not self.seeds:
            raise SweepConfigError("at least one seed is required")
        if "ppo" in self.controllers:
            if not self.policy_path:
                raise SweepConfigError("controller 'ppo' needs a policy file")
            if not Path(self.policy_path).is_file():
                raise SweepConfigError(f"policy file not found: {self.policy_path}")


@dataclass
class SweepRow:
    controller: str
    t0_c: float
    t_target_c: float
    deadline_steps: int
    seed: int
    energy_wh: float
    terminal_temp_c: float
    success: bool
    on_steps: int
    episode_return: float
    wall_ms: float
    params_hash: str = ""  # not exported to CSV

    def grid_value(self, axis: str):
        return getattr(self, AXES[axis])


def params_hash(params: TankParams, reward: RewardParams | None = None) -> str:
    reward = reward or RewardParams()
    doc = json.dumps({"tank": dataclasses.asdict(params), "reward": dataclasses.asdict(reward)}, sort_keys=True)
    return hashlib.sha256(doc.encode()).hexdigest()[:16]


def episode_seed(axis: str, value, controller: str, seed: int) -> int:
    """64-bit seed for one episode, a pure function of its identity in the sweep."""
    tag = zlib.crc32(f"{axis}|{value!r}|{controller}".encode())
    return int(np.random.SeedSequence([int(seed), tag]).generate_state(1, np.uint64)[0])


def _episode_spec(spec: SweepSpec, value) -> EpisodeSpec:
    kw = dict(spec.fixed)
    kw[AXES[spec.axis]] = value
    return EpisodeSpec(float(kw["t0_c"]), float(kw["t_target_c"]), int(kw["deadline_steps"]),
                       band_c=spec.band_c, params=spec.params)


def _run_one(spec: SweepSpec, controller: str, value, seed: int, policy) -> SweepRow:
    ep = _episode_spec(spec, value)
    start = time.perf_counter()
    if controller == "bangbang":
        result = run_controller(ep, bang_bang_action)
    elif controller == "oracle":
        result = run_controller(ep, schedule_controller(just_in_time_schedule(ep).schedule))
    elif controller == "mcts":
        cfg = dataclasses.replace(spec.mcts, rng_seed=episode_seed(spec.axis, value, controller, seed))
        result = run_mcts_episode(ep, cfg)
    elif controller == "ppo":
        rng = np.random.default_rng(episode_seed(spec.axis, value, controller, seed))
        result = run_controller(ep, policy.controller(deterministic=not spec.ppo_sample, rng=rng))
    else:  # pragma: no cover - validated earlier
        raise SweepConfigError(controller)
    wall_ms = (time.perf_counter() - start) * 1000.0
    return row_from_result(controller, seed, result, wall_ms, params_hash(ep.params))


def row_from_result(controller: str, seed: int, result: EpisodeResult, wall_ms: float = 0.0, phash: str = "") -> SweepRow:
    ep = result.spec
    return SweepRow(
        controller=controller, t0_c=ep.t0_c, t_target_c=ep.t_target_c, deadline_steps=ep.deadline_steps,
        seed=seed, energy_wh=result.energy_wh, terminal_temp_c=result.terminal_temp_c,
        success=result.success, on_steps=result.on_steps, episode_return=result.episode_return,
        wall_ms=wall_ms, params_hash=phash,
    )


def run_sweep(spec: SweepSpec) -> list[SweepRow]:
    """One row per grid point, controller and seed.

    Deterministic controllers (bang-bang, oracle, greedy PPO) produce a
    single row under the first seed. Episodes may run on ``spec.jobs``
    threads; each draws its randomness from :func:`episode_seed`, so the
    result does not depend on scheduling.
    """
    spec.validate()
    policy = None
    if "ppo" in spec.controllers:
        from .ppo import load_policy

        policy = load_policy(spec.policy_path)
    stochastic = set(STOCHASTIC) | ({"ppo"} if spec.ppo_sample else set())
    tasks = []
    for controller in spec.controllers:
        seeds = spec.seeds if controller in stochastic else spec.seeds[:1]
        for value in spec.grid():
            for seed in seeds:
                tasks.append((controller, value, seed))
    # Fail on bad grid values before any episode runs.
    for value in spec.grid():
        _episode_spec(spec, value)

    def work(task):
        return _run_one(spec, *task, policy)

    if spec.jobs > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=spec.jobs) as pool:
            rows = list(pool.map(work, tasks))
    else:
        rows = [work(t) for t in tasks]
    rows.sort(key=lambda r: (r.controller, r.grid_value(spec.axis), r.seed))
    return rows


def _fmt(x: float) -> str:
    return repr(float(x))


def write_results_csv(rows: Sequence[SweepRow], path: str | Path, include_wall: bool = True) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULTS_HEADER)
        for r in rows:
            w.writerow([
                r.controller, f"{r.t0_c:g}", f"{r.t_target_c:g}", r.deadline_steps, r.seed,
                f"{r.energy_wh:.1f}", f"{r.terminal_temp_c:.6f}", str(r.success).lower(), r.on_steps,
                _fmt(r.episode_return), f"{r.wall_ms:.3f}" if include_wall else "",
            ])


def read_results_csv(path: str | Path) -> list[SweepRow]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != RESULTS_HEADER:
            raise ValueError(f"{path}: header {reader.fieldnames} is not a results CSV")
        return [
            SweepRow(
                controller=r["controller"], t0_c=float(r["t0_c"]), t_target_c=float(r["t_target_c"]),
                deadline_steps=int(r["deadline_steps"]), seed=int(r["seed"]), energy_wh=float(r["energy_wh"]),
                terminal_temp_c=float(r["terminal_temp_c"]), success=r["success"] == "true",
                on_steps=int(r["on_steps"]), episode_return=float(r["episode_return"]),
                wall_ms=float(r["wall_ms"]) if r["wall_ms"] else math.nan,
            )
            for r in reader
        ]


# ---------------------------------------------------------------------------
# aggregation


@dataclass(frozen=True)
class SummaryRow:
    controller: str
    grid_value: float
    n: int
    mean_energy_wh: float
    min_energy_wh: float
    max_energy_wh: float
    savings_vs_bangbang: float | None  # None when undefined


def savings(energy_wh: float, baseline_wh: float) -> float | None:
    """Fractional energy saving relative to a baseline; None if the baseline used nothing."""
    if baseline_wh == 0:
        return None
    return 1.0 - energy_wh / baseline_wh


def infer_axis(rows: Sequence[SweepRow]) -> str:
    varying = [axis for axis, attr in AXES.items() if len({getattr(r, attr) for r in rows}) > 1]
    if len(varying) != 1:
        raise ValueError(f"cannot infer the sweep axis from rows (varying: {varying or 'none'})")
    return varying[0]


def summarize(rows: Sequence[SweepRow], axis: str | None = None) -> list[SummaryRow]:
    """Per-controller energy statistics at every grid point, with savings against bang-bang."""
    if not rows:
        raise ValueError("no rows to summarize")
    axis = axis or infer_axis(rows)
    groups: dict[tuple[str, float], list[float]] = {}
    for r in rows:
        groups.setdefault((r.controller, r.grid_value(axis)), []).append(r.energy_wh)
    baseline = {g: float(np.mean(v)) for (c, g), v in groups.items() if c == "bangbang"}
    out = []
    for (controller, g), energies in sorted(groups.items()):
        mean = float(np.mean(energies))
        out.append(SummaryRow(
            controller, g, len(energies), mean, float(min(energies)), float(max(energies)),
            savings(mean, baseline[g]) if g in baseline else None,
        ))
    return out


def write_summary_csv(summary: Sequence[SummaryRow], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["controller", "grid_value", "n", "mean_energy_wh", "min_energy_wh", "max_energy_wh",
                    "savings_vs_bangbang"])
        for s in summary:
            w.writerow([s.controller, f"{s.grid_value:g}", s.n, f"{s.mean_energy_wh:.1f}", f"{s.min_energy_wh:.1f}",
                        f"{s.max_energy_wh:.1f}", "NA" if s.savings_vs_bangbang is None else f"{s.savings_vs_bangbang:.4f}"])
