"""Tests for the lumped tank model."""

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from heatplan.thermal import (
    DEFAULT_PARAMS,
    TankParams,
    cooling_factor,
    deviation_after_schedule,
    max_steady_temperature,
    simulate_schedule,
    step_temperature,
    terminal_temperatures,
)


def exact_step(t, power, p=DEFAULT_PARAMS):
    """Rational-arithmetic Euler step, independent of float evaluation order."""
    F = Fraction
    k = F(p.dt_s) / (F(p.mass_kg) * F(p.cp))
    return float(F(t) + k * (F(p.eta) * F(power) - F(p.h) * F(p.area_m2) * (F(t) - F(p.t_ambient_c))))


class TestStepTemperature:
    @pytest.mark.parametrize(
        "t, power, expected",
        [
            (20.0, 0.0, 20.0),
            (20.0, 6000.0, 23.26960),
            (60.0, 0.0, 58.27916),
            (60.0, 6000.0, 61.54876),
        ],
    )
    def test_golden_values(self, t, power, expected):
        assert step_temperature(t, power) == pytest.approx(expected, abs=1e-4)
        assert step_temperature(t, power) == pytest.approx(exact_step(t, power), abs=1e-12)

    def test_equilibrium_is_exact(self):
        for p in (DEFAULT_PARAMS, TankParams(mass_kg=80, t_ambient_c=12.5), TankParams(h=7.0)):
            assert step_temperature(p.t_ambient_c, 0.0, p) == p.t_ambient_c

    def test_rejects_non_finite_temperature(self):
        for bad in (math.nan, math.inf, -math.inf):
            with pytest.raises(ValueError):
                step_temperature(bad, 0.0)

    def test_rejects_continuous_power(self):
        with pytest.raises(ValueError, match="power"):
            step_temperature(20.0, 3000.0)

    @given(st.floats(-40, 140), st.floats(-40, 140))
    def test_monotone_in_temperature(self, t1, t2):
        # Below ~1e-12 apart the two results round to the same double.
        if t2 - t1 > 1e-9:
            assert step_temperature(t1, 0.0) < step_temperature(t2, 0.0)
            assert step_temperature(t1, 6000.0) < step_temperature(t2, 6000.0)

    @given(st.floats(-40, 140))
    def test_superposition_of_heat_input(self, t):
        p = DEFAULT_PARAMS
        gain = step_temperature(t, p.p_on_w) - step_temperature(t, 0.0)
        assert gain == pytest.approx(p.dt_s * p.eta * p.p_on_w / (p.mass_kg * p.cp), rel=1e-9)
        assert gain > 0

    @given(st.floats(-40, 140).filter(lambda t: abs(t - 20.0) > 1e-6))
    def test_contraction_towards_ambient(self, t):
        a = 1.0 - cooling_factor(DEFAULT_PARAMS)
        dev = abs(step_temperature(t, 0.0) - 20.0)
        assert dev == pytest.approx(a * abs(t - 20.0), rel=1e-9)
        assert dev < abs(t - 20.0)

    @settings(max_examples=200)
    @given(st.floats(20.0, 96.0), st.lists(st.booleans(), max_size=120))
    def test_trajectory_stays_between_ambient_and_steady_state(self, t0, schedule):
        temps = simulate_schedule(t0, [int(u) for u in schedule])
        assert np.all(temps >= 20.0 - 1e-9)
        assert np.all(temps <= 96.0 + 1e-9)


class TestCoolingFactor:
    def test_default(self):
        assert cooling_factor(DEFAULT_PARAMS) == pytest.approx(0.04302, abs=1e-4)
        assert cooling_factor(DEFAULT_PARAMS) == pytest.approx(75 * 120 / (50 * 4184), rel=1e-15)

    def test_no_losses(self):
        assert cooling_factor(TankParams(h=0.0)) == 0.0

    def test_double_mass_halves_factor(self):
        assert cooling_factor(TankParams(mass_kg=100.0)) == pytest.approx(0.02151, abs=1e-4)
        assert cooling_factor(TankParams(mass_kg=100.0)) == pytest.approx(cooling_factor(DEFAULT_PARAMS) / 2)


class TestTankParams:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"mass_kg": 0.0},
            {"cp": -1.0},
            {"h": -0.1},
            {"dt_s": 0.0},
            {"eta": 1.2},
            {"p_off_w": 100.0},
            {"mass_kg": math.nan},
            {"dt_s": 5000.0},  # cooling factor 1.79: unstable
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            TankParams(**kwargs)

    def test_derived_quantities(self):
        p = DEFAULT_PARAMS
        assert p.step_energy_j == 720_000.0
        assert p.step_energy_wh == 200.0
        assert p.delivered_step_energy_j == pytest.approx(684_000.0)
        assert p.loss_w_per_c == 75.0


class TestMaxSteadyTemperature:
    def test_default_is_96(self):
        assert max_steady_temperature(DEFAULT_PARAMS) == 96.0

    def test_no_heat_input(self):
        assert max_steady_temperature(TankParams(eta=0.0)) == 20.0

    def test_half_power(self):
        assert max_steady_temperature(TankParams(p_on_w=3000.0)) == pytest.approx(58.0)

    def test_unbounded_without_losses(self):
        with pytest.raises(ValueError, match="unbounded"):
            max_steady_temperature(TankParams(h=0.0))

    def test_is_fixed_point(self):
        assert step_temperature(96.0, 6000.0) == pytest.approx(96.0, abs=1e-12)


class TestDeviationAfterSchedule:
    def test_ambient_all_off(self):
        for d in (0, 1, 30, 90):
            assert deviation_after_schedule(20.0, [0] * d) == pytest.approx(20.0, abs=1e-12)

    def test_late_block_reaches_60(self):
        sched = [0] * 43 + [1] * 17
        a = 1.0 - cooling_factor(DEFAULT_PARAMS)
        assert deviation_after_schedule(20.0, sched) == pytest.approx(60.00, abs=0.05)
        assert deviation_after_schedule(20.0, sched) == pytest.approx(20 + 76.0 * (1 - a**17), rel=1e-12)
        assert deviation_after_schedule(20.0, sched) == pytest.approx(simulate_schedule(20.0, sched)[-1], rel=1e-9)

    def test_cooling_from_60(self):
        a = 1.0 - cooling_factor(DEFAULT_PARAMS)
        assert deviation_after_schedule(60.0, [0] * 60) == pytest.approx(22.86, abs=0.05)
        assert deviation_after_schedule(60.0, [0] * 60) == pytest.approx(20 + 40 * a**60, rel=1e-12)

    def test_matches_iterated_stepping_on_random_cases(self):
        rng = np.random.default_rng(12345)
        for _ in range(1000):
            t0 = rng.uniform(-10.0, 95.0)
            d = int(rng.integers(0, 91))
            sched = rng.integers(0, 2, size=d)
            closed = deviation_after_schedule(t0, sched)
            stepped = simulate_schedule(t0, sched)[-1]
            assert abs(closed - stepped) <= 1e-9 * abs(stepped)

    def test_vectorised_form_agrees(self):
        rng = np.random.default_rng(7)
        sched = rng.integers(0, 2, size=(50, 25))
        batch = terminal_temperatures(15.0, sched)
        single = [deviation_after_schedule(15.0, s) for s in sched]
        np.testing.assert_allclose(batch, single, rtol=1e-12)
