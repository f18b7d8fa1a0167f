import csv

import numpy as np
import pytest

from heatplan.env import (
    EpisodeFinishedError,
    EpisodeSpec,
    HeaterEnv,
    Observation,
    RewardParams,
    SpecError,
    episode_return_bounds,
    max_energy_penalty,
    rollout_schedule,
    write_trajectory_csv,
)
from heatplan.thermal import DEFAULT_PARAMS, TankParams


@pytest.fixture
def env():
    return HeaterEnv()


class TestReset:
    @pytest.mark.parametrize(
        "spec, obs",
        [
            ((20, 60, 60), (20, 60, 20, 60)),
            ((10, 40, 30), (10, 40, 20, 30)),
            ((30, 80, 90), (30, 80, 20, 90)),
        ],
    )
    def test_observation(self, env, spec, obs):
        assert env.reset(EpisodeSpec(*spec)) == Observation(*obs)
        assert env.t == 0

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(t0_c=20, t_target_c=60, deadline_steps=0),
            dict(t0_c=20, t_target_c=60, deadline_steps=5, band_c=0.0),
            dict(t0_c=20, t_target_c=60, deadline_steps=5, tol_steps=0),
            dict(t0_c=float("nan"), t_target_c=60, deadline_steps=5),
            dict(t0_c=20, t_target_c=float("inf"), deadline_steps=5),
            dict(t0_c=20, t_target_c=60, deadline_steps=2.5),
        ],
    )
    def test_invalid_spec(self, kwargs):
        with pytest.raises(SpecError):
            EpisodeSpec(**kwargs)


class TestStep:
    def test_off_mid_episode(self, env):
        env.reset(EpisodeSpec(20, 60, 10))
        out = env.step(0)
        assert out.reward == 0.0
        assert out.energy_j == 0.0
        assert not out.done
        assert out.obs.steps_remaining == 9

    def test_on_mid_episode(self, env):
        env.reset(EpisodeSpec(20, 60, 10))
        out = env.step(1)
        assert out.energy_j == 720_000.0
        assert out.reward == pytest.approx(-0.0133920, abs=1e-9)

    def test_terminal_penalty_one_degree_short(self, env):
        # Start chosen so a final off-step lands exactly on 59 °C.
        a = DEFAULT_PARAMS.decay
        env.reset(EpisodeSpec(20 + 39 / a, 60, 1))
        out = env.step(0)
        assert out.obs.t_c == pytest.approx(59.0, abs=1e-12)
        assert out.reward == pytest.approx(-0.03, abs=1e-12)
        assert out.done

    def test_terminal_penalty_on_target(self, env):
        env.reset(EpisodeSpec(20.0, 20.0, 1))
        out = env.step(0)
        assert out.reward == 0.0
        assert out.done

    def test_overshoot_is_penalised(self, env):
        env.reset(EpisodeSpec(60.0, 55.0, 1))
        out = env.step(0)
        assert out.reward == pytest.approx(-0.03 * (out.obs.t_c - 55.0))

    def test_cannot_step_finished_episode(self, env):
        env.reset(EpisodeSpec(20, 60, 1))
        env.step(0)
        with pytest.raises(EpisodeFinishedError):
            env.step(0)

    def test_cannot_step_before_reset(self, env):
        with pytest.raises(EpisodeFinishedError):
            env.step(0)

    def test_bad_action(self, env):
        env.reset(EpisodeSpec(20, 60, 3))
        with pytest.raises(ValueError):
            env.step(2)

    def test_rewards_never_positive(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            spec = EpisodeSpec(rng.uniform(10, 30), rng.uniform(40, 80), int(rng.integers(1, 40)))
            res = rollout_schedule(spec, rng.integers(0, 2, spec.deadline_steps))
            assert all(r <= 0 for r in res.rewards)


class TestRewardParams:
    def test_defaults_satisfy_dominance(self):
        rp = RewardParams()
        assert rp.alpha * DEFAULT_PARAMS.delivered_step_energy_j == pytest.approx(0.012722, abs=1e-6)
        assert rp.alpha * 684_000 < rp.beta * 1.0

    def test_dominance_violation(self):
        with pytest.raises(SpecError):
            RewardParams(alpha=1e-7, beta=0.03)

    def test_env_checks_dominance_for_spec_params(self):
        env = HeaterEnv(RewardParams(alpha=4e-8))
        with pytest.raises(SpecError):
            env.reset(EpisodeSpec(20, 60, 5, params=TankParams(p_on_w=12000.0, mass_kg=100.0)))


class TestEpisodeResult:
    def test_energy_is_multiple_of_200wh(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            spec = EpisodeSpec(rng.uniform(10, 30), rng.uniform(40, 80), int(rng.integers(1, 91)))
            res = rollout_schedule(spec, rng.integers(0, 2, spec.deadline_steps))
            assert res.energy_wh == 200.0 * res.on_steps
            assert len(res.actions) == spec.deadline_steps
            assert len(res.temps) == spec.deadline_steps + 1
            assert res.success == (abs(res.terminal_temp_c - spec.t_target_c) <= 1.0)

    def test_deterministic(self):
        spec = EpisodeSpec(17.5, 63.0, 45)
        sched = np.random.default_rng(0).integers(0, 2, 45)
        assert rollout_schedule(spec, sched) == rollout_schedule(spec, sched)

    def test_schedule_length_checked(self):
        with pytest.raises(SpecError):
            rollout_schedule(EpisodeSpec(20, 60, 5), [1, 1])


class TestReturnBounds:
    @pytest.mark.parametrize("d, cost", [(60, 0.8035), (90, 1.2053), (0, 0.0)])
    def test_all_on_energy_cost(self, d, cost):
        assert max_energy_penalty(d) == pytest.approx(cost, abs=1e-4)

    def test_bounds_contain_random_returns(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            spec = EpisodeSpec(rng.uniform(10, 30), rng.uniform(40, 80), int(rng.integers(1, 91)))
            lo, hi = episode_return_bounds(spec)
            assert hi == 0.0
            res = rollout_schedule(spec, rng.integers(0, 2, spec.deadline_steps))
            assert lo - 1e-12 <= res.episode_return <= hi

    def test_compact_interval_on_sweep_deadlines(self):
        # Every sweep deadline keeps the worst case within a few units of zero.
        for d in (30, 45, 60, 75, 90):
            lo, _ = episode_return_bounds(EpisodeSpec(20, 60, d))
            assert -3.0 < lo < 0


def test_trajectory_csv(tmp_path):
    res = rollout_schedule(EpisodeSpec(20, 60, 4), [0, 1, 0, 1])
    path = tmp_path / "traj.csv"
    write_trajectory_csv(res, path)
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["step", "temp_c", "action", "power_w", "reward", "cum_energy_wh"]
    assert len(rows) == 5
    assert [r[2] for r in rows[1:]] == ["0", "1", "0", "1"]
    assert rows[-1][5] == "400.000000"
    assert rows[1][1] == "20.000000"
    assert rows[2][1] == f"{res.temps[2]:.6f}"
