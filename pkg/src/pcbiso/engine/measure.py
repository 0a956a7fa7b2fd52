"""Waveform measurements on simulated traces."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .circuit import Trace


class MeasurementError(ValueError):
    pass


@dataclass(frozen=True)
class FrequencyMeasurement:
    mean: float
    std: float
    periods: int


def _window(time, t0, t1):
    if t0 is None:
        t0 = time[0]
    if t1 is None:
        t1 = time[-1]
    if t0 < time[0] - 1e-15 or t1 > time[-1] + 1e-15 or t1 <= t0:
        raise MeasurementError(f"window ({t0:.4g}, {t1:.4g}) outside trace ({time[0]:.4g}, {time[-1]:.4g})")
    return (time >= t0) & (time <= t1)


def rising_crossings(time: np.ndarray, y: np.ndarray, level: float) -> np.ndarray:
    """Linearly interpolated times where ``y`` rises through ``level``."""
    below = y[:-1] < level
    above = y[1:] >= level
    i = np.nonzero(below & above)[0]
    y0, y1 = y[i], y[i + 1]
    return time[i] + (level - y0) / (y1 - y0) * (time[i + 1] - time[i])


def falling_crossings(time: np.ndarray, y: np.ndarray, level: float) -> np.ndarray:
    return rising_crossings(time, -np.asarray(y), -level)


def measure_frequency(time, y, window=(None, None)) -> FrequencyMeasurement:
    """Oscillation frequency from rising mean-crossings inside ``window``."""
    time = np.asarray(time)
    y = np.asarray(y)
    m = _window(time, *window)
    t, v = time[m], y[m]
    if len(v) < 3:
        raise MeasurementError("no oscillation detected")
    crossings = rising_crossings(t, v, float(np.mean(v)))
    if len(crossings) < 4:
        raise MeasurementError("no oscillation detected")
    f = 1.0 / np.diff(crossings)
    return FrequencyMeasurement(float(np.mean(f)), float(np.std(f)), len(f))


def envelope(time, y, period: float) -> np.ndarray:
    """Peak-to-peak of ``y`` over a trailing window one ``period`` long."""
    time = np.asarray(time)
    y = np.asarray(y)
    dt = time[1] - time[0]
    w = max(int(round(period / dt)), 1)
    if w >= len(y):
        return np.full(len(y), np.ptp(y))
    from numpy.lib.stride_tricks import sliding_window_view

    win = sliding_window_view(y, w + 1)
    pp = win.max(axis=1) - win.min(axis=1)
    return np.concatenate([np.full(w, pp[0]), pp])


def measure_startup(time, y, amplitude_threshold: float, period: float) -> float:
    """First time the one-period peak-to-peak envelope exceeds the threshold.

    The envelope at sample ``k`` covers ``[t_k - period, t_k]``; samples in
    the first period use the first full window.
    """
    time = np.asarray(time)
    env = envelope(time, y, period)
    hit = np.nonzero(env > amplitude_threshold)[0]
    if len(hit) == 0:
        raise MeasurementError(
            f"envelope never exceeds {amplitude_threshold} (max {env.max():.4g})"
        )
    w = max(int(round(period / (time[1] - time[0]))), 1)
    k = hit[0]
    return float(time[k] - time[0]) if k > w else 0.0


def measure_power(trace: Trace, supply: str, window=(None, None)) -> float:
    """Mean power delivered by voltage source ``supply`` over ``window``."""
    m = _window(trace.time, *window)
    v = trace[f"v({supply})"][m]
    i = trace[f"i({supply})"][m]
    return float(np.mean(v * i))
