"""Electric longitudinal-dynamics energy model with regenerative braking.

Traction force is inertia plus rolling resistance (only while moving) plus
aerodynamic drag. Positive mechanical power is drawn from the battery at
propulsion efficiency; negative power is recovered at recuperation
efficiency, so braking steps report negative energy.
"""

from __future__ import annotations

import numpy as np

from .params import EnergyParams

J_PER_WH = 3600.0


def energy_step(speed, accel, dt: float, p: EnergyParams):
    """Battery energy for one step in Wh (negative while recuperating)."""
    v = np.asarray(speed, dtype=np.float64)
    a = np.asarray(accel, dtype=np.float64)
    force = (p.mass * a
             + p.mass * p.gravity * p.rolling_coeff * (v > 0)
             + 0.5 * p.air_density * p.drag_coeff * p.frontal_area * v * v)
    v_mid = np.maximum(v + a * dt / 2.0, 0.0)
    power = force * v_mid
    joules = np.where(power >= 0, power * dt / p.eta_propulsion,
                      power * dt * p.eta_recuperation)
    return joules / J_PER_WH
