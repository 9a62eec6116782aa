"""Signal phase arithmetic."""

from __future__ import annotations

import numpy as np

from .params import SignalProgram


def signal_query(signal: SignalProgram, t: float) -> tuple[bool, float]:
    """Phase of one signal at time t: (is_red, time_to_green).

    time_to_green is 0 during green, otherwise the seconds until the next
    green onset.
    """
    phase = (t - signal.offset) % signal.cycle
    green = signal.green_start <= phase < signal.green_start + signal.green_duration
    if green:
        return False, 0.0
    return True, (signal.green_start - phase) % signal.cycle


def phase_times(signal: SignalProgram, t) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized phase info: (is_red, time_to_green, green_time_left).

    green_time_left is 0 while red.
    """
    phase = np.asarray((t - signal.offset) % signal.cycle)
    green = (phase >= signal.green_start) & (phase < signal.green_start + signal.green_duration)
    time_to_green = np.where(green, 0.0, (signal.green_start - phase) % signal.cycle)
    green_left = np.where(green, signal.green_start + signal.green_duration - phase, 0.0)
    return ~green, time_to_green, green_left
