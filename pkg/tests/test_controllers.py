import itertools

import numpy as np
import pytest

from heatplan.controllers import (
    always_off,
    bang_bang_action,
    brute_force_schedule,
    just_in_time_schedule,
    run_controller,
    schedule_controller,
)
from heatplan.env import EpisodeSpec, Observation, rollout_schedule
from heatplan.thermal import DEFAULT_PARAMS, deviation_after_schedule, simulate_schedule

SWEEP_DEADLINES = (30, 45, 60, 75, 90)


class TestJustInTime:
    def test_reference_spec(self):
        res = just_in_time_schedule(EpisodeSpec(20, 60, 60))
        assert res.on_count == 17
        assert res.energy_wh == 3400.0
        assert res.feasible
        assert res.schedule == (0,) * 43 + (1,) * 17
        assert res.predicted_terminal_c == pytest.approx(60.0, abs=0.05)
        assert res.predicted_terminal_c == pytest.approx(simulate_schedule(20.0, res.schedule)[-1], abs=1e-9)

    def test_warm_start_needs_fewer_steps(self):
        res = just_in_time_schedule(EpisodeSpec(60, 60, 60))
        assert res.on_count == 15
        assert res.feasible

    def test_infeasible_returns_all_on(self):
        res = just_in_time_schedule(EpisodeSpec(10, 80, 10))
        assert not res.feasible
        assert res.schedule == (1,) * 10
        assert res.predicted_terminal_c == pytest.approx(40.598, abs=1e-3)

    def test_zero_energy_when_already_there(self):
        res = just_in_time_schedule(EpisodeSpec(20, 20, 30))
        assert res.on_count == 0
        assert res.feasible

    def test_prediction_matches_simulation(self):
        for d in SWEEP_DEADLINES:
            spec = EpisodeSpec(20, 60, d)
            res = just_in_time_schedule(spec)
            assert rollout_schedule(spec, res.schedule).terminal_temp_c == pytest.approx(
                res.predicted_terminal_c, abs=1e-9)

    def test_energy_flat_in_deadline(self):
        counts = {just_in_time_schedule(EpisodeSpec(20, 60, d)).on_count for d in SWEEP_DEADLINES}
        assert max(counts) - min(counts) <= 1


class TestBruteForce:
    def test_small_target_prefers_latest_tie(self):
        res = brute_force_schedule(EpisodeSpec(20, 26, 4))
        assert res.on_count == 2
        assert res.feasible
        # Of all feasible two-step schedules, the latest code sum(u_t 2^t) wins.
        feasible = [u for u in itertools.product((0, 1), repeat=4)
                    if sum(u) == 2 and abs(deviation_after_schedule(20, u) - 26) <= 1]
        assert res.schedule == max(feasible, key=lambda u: sum(b << t for t, b in enumerate(u)))

    def test_agrees_with_greedy_when_infeasible(self):
        spec = EpisodeSpec(20, 60, 16)
        assert not brute_force_schedule(spec).feasible
        assert brute_force_schedule(spec).on_count == just_in_time_schedule(spec).on_count == 16

    def test_deadline_limit(self):
        with pytest.raises(ValueError):
            brute_force_schedule(EpisodeSpec(20, 60, 21))

    @pytest.mark.parametrize("t0", [10.0, 20.0, 30.0])
    @pytest.mark.parametrize("target", [40.0, 50.0, 55.0])
    @pytest.mark.parametrize("d", [6, 10, 14])
    def test_matches_greedy(self, t0, target, d):
        spec = EpisodeSpec(t0, target, d)
        assert brute_force_schedule(spec).on_count == just_in_time_schedule(spec).on_count


def test_late_packing_dominates_random_placement():
    """For a fixed on-count, the late block yields the highest terminal temperature."""
    rng = np.random.default_rng(2024)
    for _ in range(100):
        d = int(rng.integers(5, 91))
        k = int(rng.integers(1, d))
        sched = np.zeros(d, dtype=int)
        sched[rng.choice(d, size=k, replace=False)] = 1
        late = [0] * (d - k) + [1] * k
        assert deviation_after_schedule(20.0, sched) <= deviation_after_schedule(20.0, late) + 1e-12


class TestBangBang:
    @pytest.mark.parametrize("t, action", [(59.9, 1), (60.0, 0), (61.5, 0)])
    def test_threshold(self, t, action):
        assert bang_bang_action(Observation(t, 60.0, 20.0, 10)) == action

    @pytest.mark.parametrize(
        "d, energy, terminal",
        [(30, 4800.0, 60.53), (45, 6400.0, 61.05), (60, 7800.0, 58.31), (75, 9400.0, 58.66), (90, 11000.0, 59.11)],
    )
    def test_deadline_sweep_values(self, d, energy, terminal):
        res = run_controller(EpisodeSpec(20, 60, d), bang_bang_action)
        assert res.energy_wh == energy
        assert res.terminal_temp_c == pytest.approx(terminal, abs=0.01)

    def test_energy_increases_with_deadline(self):
        energies = [run_controller(EpisodeSpec(20, 60, d), bang_bang_action).energy_wh for d in SWEEP_DEADLINES]
        assert all(b > a for a, b in zip(energies, energies[1:]))

    @pytest.mark.parametrize("target", [40.0, 50.0, 60.0, 70.0, 80.0])
    @pytest.mark.parametrize("d", SWEEP_DEADLINES)
    def test_terminal_band_once_regulating(self, target, d):
        # After first reaching the target the relay keeps the state inside
        # [target - c(target - Ta), target + b - c(target - Ta)], where c is
        # the cooling factor and b the per-step heat gain.
        p = DEFAULT_PARAMS
        res = run_controller(EpisodeSpec(20, target, d), bang_bang_action)
        if max(res.temps) < target:
            pytest.skip("target not reached before the deadline")
        drop = (1.0 - p.decay) * (target - p.t_ambient_c)
        assert target - drop - 1e-9 <= res.terminal_temp_c <= target + p.heat_gain_c - drop + 1e-9

    def test_uses_at_least_oracle_energy_on_feasible_specs(self):
        for d in SWEEP_DEADLINES:
            spec = EpisodeSpec(20, 60, d)
            assert run_controller(spec, bang_bang_action).energy_wh >= just_in_time_schedule(spec).energy_wh


def test_always_off_cools_towards_ambient():
    res = run_controller(EpisodeSpec(60, 60, 60), always_off)
    assert res.energy_wh == 0.0
    assert res.terminal_temp_c == pytest.approx(22.8589, abs=1e-4)


def test_schedule_controller_replays_schedule():
    spec = EpisodeSpec(20, 60, 6)
    sched = (1, 0, 0, 1, 1, 0)
    assert tuple(run_controller(spec, schedule_controller(sched)).actions) == sched
