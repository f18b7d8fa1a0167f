"""Lumped single-tank thermal model.

The tank is a uniform body of water heated by a relay-switched immersion
element and losing heat to the room through Newtonian convection:

    m * cp * dT/dt = eta * P - h * A * (T - T_a)

Everything here works on the explicit-Euler discretisation of that balance
at the fixed control interval ``dt_s``. Because the update is linear in both
temperature and power, a whole on/off schedule can also be evaluated in
closed form (see :func:`deviation_after_schedule`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

TEMP_MIN_C = -50.0
TEMP_MAX_C = 150.0


def cooling_factor(params: TankParams) -> float:
    """Dimensionless h*A*dt/(m*cp): fraction of the ambient deviation lost per step."""
    return params.h * params.area_m2 * params.dt_s / (params.mass_kg * params.cp)


@dataclass(frozen=True)
class TankParams:
    """Physical constants of the tank and the relay heater.

    Defaults describe a 50 kg domestic tank with a 6 kW element switched
    every two minutes in a 20 °C room.
    """

    mass_kg: float = 50.0
    cp: float = 4184.0  # J/(kg K)
    h: float = 50.0  # W/°C
    area_m2: float = 1.5
    eta: float = 0.95
    p_on_w: float = 6000.0
    p_off_w: float = 0.0
    dt_s: float = 120.0
    t_ambient_c: float = 20.0

    def __post_init__(self) -> None:
        for name in ("mass_kg", "cp", "h", "area_m2", "eta", "p_on_w", "p_off_w", "dt_s", "t_ambient_c"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.mass_kg <= 0 or self.cp <= 0 or self.dt_s <= 0:
            raise ValueError("mass_kg, cp and dt_s must be positive")
        if self.h < 0 or self.area_m2 < 0:
            raise ValueError("h and area_m2 must be non-negative")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"eta must lie in [0, 1], got {self.eta}")
        if self.p_on_w < 0:
            raise ValueError("p_on_w must be non-negative")
        if self.p_off_w != 0.0:
            raise ValueError("p_off_w must be 0 W (relay heater)")
        if cooling_factor(self) >= 1.0:
            raise ValueError(
                f"cooling factor {cooling_factor(self):.4f} >= 1: explicit Euler update is unstable"
            )

    @property
    def loss_w_per_c(self) -> float:
        """Overall conductance h*A in W/°C."""
        return self.h * self.area_m2

    @property
    def heat_capacity_j_per_c(self) -> float:
        return self.mass_kg * self.cp

    @property
    def decay(self) -> float:
        """Per-step retention of the deviation from ambient, ``1 - cooling_factor``."""
        return 1.0 - cooling_factor(self)

    @property
    def heat_gain_c(self) -> float:
        """Temperature rise contributed by one on-step, ignoring losses."""
        return self.eta * self.p_on_w * self.dt_s / (self.mass_kg * self.cp)

    @property
    def step_energy_j(self) -> float:
        """Electrical energy drawn by one on-step."""
        return self.p_on_w * self.dt_s

    @property
    def step_energy_wh(self) -> float:
        return self.p_on_w * self.dt_s / 3600.0

    @property
    def delivered_step_energy_j(self) -> float:
        """Heat actually delivered to the water by one on-step."""
        return self.eta * self.p_on_w * self.dt_s


DEFAULT_PARAMS = TankParams()


def step_temperature(t: float, power_w: float, params: TankParams = DEFAULT_PARAMS) -> float:
    """Advance the tank temperature by one control interval.

    Args:
        t: Current water temperature in °C.
        power_w: Electrical power applied over the interval; must be one of
            the two relay levels.
        params: Tank constants.

    Returns:
        Temperature at the end of the interval in °C.
    """
    if not math.isfinite(t):
        raise ValueError(f"temperature must be finite, got {t!r}")
    if power_w != params.p_on_w and power_w != params.p_off_w:
        raise ValueError(f"power must be {params.p_off_w} or {params.p_on_w} W, got {power_w}")
    p = params
    return t + (p.dt_s / (p.mass_kg * p.cp)) * (p.eta * power_w - p.h * p.area_m2 * (t - p.t_ambient_c))


def max_steady_temperature(params: TankParams = DEFAULT_PARAMS) -> float:
    """Fixed point of continuous full-power heating, T_a + eta*P_on/(h*A)."""
    loss = params.h * params.area_m2
    if loss <= 0:
        raise ValueError("no heat loss (h*A = 0): heating is unbounded")
    return params.t_ambient_c + params.eta * params.p_on_w / loss


def simulate_schedule(t0: float, schedule: Sequence[int], params: TankParams = DEFAULT_PARAMS) -> np.ndarray:
    """Iterate :func:`step_temperature` over an on/off schedule.

    Returns the temperature sequence of length ``len(schedule) + 1``,
    starting with ``t0``.
    """
    temps = np.empty(len(schedule) + 1)
    temps[0] = t = float(t0)
    for i, u in enumerate(schedule):
        t = step_temperature(t, params.p_on_w if u else params.p_off_w, params)
        temps[i + 1] = t
    return temps


def deviation_after_schedule(t0: float, schedule: Sequence[int], params: TankParams = DEFAULT_PARAMS) -> float:
    """Terminal temperature of an on/off schedule, evaluated in closed form.

    Unrolling the linear update ``T' = a*T + (1-a)*T_a + b*u`` gives

        T_D = T_a + a**D * (T0 - T_a) + b * sum(a**(D-1-t) for on-steps t)

    which agrees with stepping through :func:`step_temperature` up to
    floating-point rounding.
    """
    u = np.asarray(schedule, dtype=np.int64).reshape(-1)
    n = u.size
    a = params.decay
    b = params.heat_gain_c
    weights = a ** np.arange(n - 1, -1, -1, dtype=float)
    heat = b * float(weights[u != 0].sum()) if n else 0.0
    return params.t_ambient_c + a**n * (t0 - params.t_ambient_c) + heat


def terminal_temperatures(t0: float, schedules: np.ndarray, params: TankParams = DEFAULT_PARAMS) -> np.ndarray:
    """Vectorised :func:`deviation_after_schedule` over the rows of a 0/1 matrix."""
    schedules = np.asarray(schedules)
    n = schedules.shape[1]
    a = params.decay
    weights = params.heat_gain_c * a ** np.arange(n - 1, -1, -1, dtype=float)
    return params.t_ambient_c + a**n * (t0 - params.t_ambient_c) + schedules @ weights
