"""Steady-state runs of the transmitter and isolator used by the CLI and checks."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .engine import SimOptions, Stimulus, Trace, default_dt_max, envelope, measure_frequency, measure_power, measure_startup, transient
from .topologies import IsolatorConfig, build_isolator, build_transmitter

F_OSC_GUESS = 20e6  # only sets the default time step


def _opts(t_stop, dt_max, probes=None, decimation=1):
    return SimOptions(t_stop=t_stop, dt_max=dt_max or default_dt_max(f_osc=F_OSC_GUESS),
                      output_decimation=decimation, probes=probes)


def run_transmitter(cfg: IsolatorConfig, t_stop: float = 5e-6, dt_max: float | None = None) -> Trace:
    """Transmitter powered at t=0 (10 ns ramp), differential drain voltage in ``VP``."""
    tr = transient(build_transmitter(cfg, Stimulus.step(cfg.supply)),
                   _opts(t_stop, dt_max, probes=("D5", "D6", "TXS")))
    return tr.with_channel("VP", tr["D5"] - tr["D6"])


@dataclass(frozen=True)
class OscillatorMetrics:
    frequency: float
    frequency_std: float
    envelope_1us: float
    envelope_2us: float
    envelope_final: float
    startup: float
    startup_threshold: float
    tx_power: float

    @property
    def sustained(self) -> bool:
        return self.envelope_2us >= self.envelope_1us

    def as_dict(self) -> dict:
        d = asdict(self)
        d["sustained"] = self.sustained
        return d


def oscillator_metrics(tr: Trace, startup_threshold: float = 2.0, supply: str = "VDX") -> OscillatorMetrics:
    """Frequency, envelope and start-up of the primary voltage ``VP``.

    Frequency is taken over the second half of the trace; envelope values
    are peak-to-peak over the trailing period ending at 1 us, 2 us and the
    end of the run.
    """
    t, vp = tr.time, tr["VP"]
    t_end = t[-1]
    f = measure_frequency(t, vp, (0.5 * t_end, t_end))
    period = 1.0 / f.mean
    env = envelope(t, vp, period)
    at = lambda s: float(np.interp(s, t, env))  # noqa: E731
    start = measure_startup(t, vp, startup_threshold, period)
    power = measure_power(tr, supply, (0.5 * t_end, t_end))
    return OscillatorMetrics(f.mean, f.std, at(1e-6), at(2e-6), float(env[-1]), start,
                             startup_threshold, power)


@dataclass(frozen=True)
class IsolatorSteadyState:
    dx: float
    dy_mean: float
    dy_min: float
    dy_max: float
    tx_power: float
    rx_power: float

    def as_dict(self) -> dict:
        return asdict(self)


def isolator_steady_state(cfg: IsolatorConfig, dx_high: bool, hold: float = 5e-6,
                          dt_max: float | None = None) -> IsolatorSteadyState:
    """Isolator with DX held; averages over the last 40% of ``hold``."""
    dx = Stimulus.step(cfg.supply) if dx_high else Stimulus.constant(0.0)
    tr = transient(build_isolator(cfg, dx), _opts(hold, dt_max, probes=("DX", "DY")))
    w = (0.6 * hold, hold)
    m = tr.time >= w[0]
    dy = tr["DY"][m]
    return IsolatorSteadyState(
        cfg.supply if dx_high else 0.0, float(dy.mean()), float(dy.min()), float(dy.max()),
        measure_power(tr, "VDX", w), measure_power(tr, "VVRX", w),
    )
