"""High/low-side signalling analysis: truth table, lockout and dead time.

Two evaluation modes share the same measurements. ``behavioral_bridge``
treats each channel as an ideal delay element driven by the sign of V_TX and
is cheap enough for randomized lockout fuzzing; ``transient_bridge`` runs the
full circuit through the engine.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .devices import diode_i
from .engine import (
    MeasurementError,
    SimOptions,
    Stimulus,
    Trace,
    default_dt_max,
    falling_crossings,
    rising_crossings,
    transient,
)
from .topologies import HalfBridgeConfig, build_halfbridge

V_ACTIVE = 0.8  # active-low threshold (TTL V_IL)
LOGIC_THRESHOLD = 2.5
RX_SETTLE = 0.5e-6  # receiver supply power-up excluded from lockout scans


def vtx_level(a: int, b: int, supply: float = 5.0) -> float:
    """Voltage across the stacked oscillators for logic inputs ``a`` and ``b``."""
    if a not in (0, 1) or b not in (0, 1):
        raise ValueError("logic inputs must be 0 or 1")
    return supply * (b - a)


@dataclass(frozen=True)
class BridgeStimulus:
    a: Stimulus
    b: Stimulus

    def __post_init__(self):
        for s in (self.a, self.b):
            v = s.values
            if v.min() < -0.5 or v.max() > 5.5:
                raise ValueError("bridge logic waveforms must stay within [-0.5, 5.5] V")

    @classmethod
    def constant(cls, a: int, b: int, high: float = 5.0, hold: float = 10e-6,
                 rise: float = 10e-9) -> "BridgeStimulus":
        """Inputs held at ``(a, b)`` for ``hold`` seconds.

        Both lines ramp from zero so the circuit powers up like the hardware would.
        """
        if not 0 < rise < hold:
            raise ValueError("need 0 < rise < hold")

        def held(level: int) -> Stimulus:
            v = high * level
            return Stimulus(((0.0, 0.0), (rise, v), (hold, v)))

        return cls(held(a), held(b))

    @classmethod
    def square(cls, frequency: float = 50e3, cycles: int = 10, high: float = 5.0,
               rise: float = 10e-9) -> "BridgeStimulus":
        """Complementary square wave; A starts high, B low."""
        if not frequency > 0 or cycles < 1:
            raise ValueError("need frequency > 0 and cycles >= 1")
        half = 0.5 / frequency
        if not rise < 0.2 * half:
            raise ValueError("rise too slow for the frequency")

        def wave(first_high: bool) -> Stimulus:
            lvl = lambda k: high * ((k % 2 == 0) == first_high)  # noqa: E731
            pts = [(0.0, 0.0), (rise, lvl(0))]
            for k in range(1, 2 * cycles):
                pts += [(k * half, lvl(k - 1)), (k * half + rise, lvl(k))]
            pts.append((2 * cycles * half, lvl(2 * cycles - 1)))
            return Stimulus(tuple(pts))

        return cls(wave(True), wave(False))

    @property
    def duration(self) -> float:
        return max(self.a.duration, self.b.duration)


def _logic_edges(s: Stimulus, threshold: float = LOGIC_THRESHOLD) -> tuple[int, list[tuple[float, int]]]:
    """Initial logic level and exact threshold crossings of a PWL waveform."""
    t, v = s.times, s.values
    level = int(v[0] > threshold)
    edges = []
    for k in range(len(t) - 1):
        v0, v1 = v[k], v[k + 1]
        new = int(v1 > threshold)
        if new != level:
            tc = t[k] + (threshold - v0) / (v1 - v0) * (t[k + 1] - t[k])
            edges.append((float(tc), new))
            level = new
    return int(v[0] > threshold), edges


def vtx_timeline(stim: BridgeStimulus) -> list[tuple[float, int]]:
    """Piecewise-constant sign of V_TX as ``(t_start, sign)`` segments."""
    a0, ea = _logic_edges(stim.a)
    b0, eb = _logic_edges(stim.b)
    events = sorted([(t, "a", v) for t, v in ea] + [(t, "b", v) for t, v in eb])
    a, b = a0, b0
    out = [(0.0, b - a)]
    for t, which, v in events:
        if which == "a":
            a = v
        else:
            b = v
        sign = b - a
        if t == out[-1][0]:
            out[-1] = (t, sign)
        elif sign != out[-1][1]:
            out.append((t, sign))
    return out


def enable_intervals(timeline, sign: int, t_end: float) -> list[tuple[float, float]]:
    spans = []
    for k, (t, s) in enumerate(timeline):
        if s == sign:
            stop = timeline[k + 1][0] if k + 1 < len(timeline) else t_end
            spans.append((t, stop))
    return spans


def delayed_intervals(spans, delay_on: float, delay_off: float, t_end: float) -> list[tuple[float, float]]:
    """Active spans of an output that follows ``spans`` with separate delays.

    Enables shorter than ``delay_on - delay_off`` never reach the output.
    Spans running to ``t_end`` are left open-ended.
    """
    out = []
    for s, e in spans:
        on = s + delay_on
        off = np.inf if e >= t_end else e + delay_off
        if off > on:
            if out and on <= out[-1][1]:
                out[-1] = (out[-1][0], max(out[-1][1], off))
            else:
                out.append((on, off))
    return out


def behavioral_bridge(stim: BridgeStimulus, delay_on: float, delay_off: float, dt: float = 1e-9,
                      high: float = 5.0) -> Trace:
    """Event-level bridge: outputs follow V_TX with fixed assert/release delays.

    Returns a trace with active-low logic channels DLS and DHS and the ideal
    V_TX; ``metadata["active"]`` holds the exact active spans per output.
    """
    if delay_on < 0 or delay_off < 0:
        raise ValueError("delays must be >= 0")
    t_end = stim.duration
    tl = vtx_timeline(stim)
    low = delayed_intervals(enable_intervals(tl, +1, t_end), delay_on, delay_off, t_end)
    hi = delayed_intervals(enable_intervals(tl, -1, t_end), delay_on, delay_off, t_end)
    time = np.arange(int(np.floor(t_end / dt * (1 + 1e-12))) + 1) * dt

    def level(spans):
        y = np.full(len(time), high)
        for on, off in spans:
            y[(time >= on) & (time < off)] = 0.0
        return y

    vtx = stim.b(time) - stim.a(time)
    return Trace(time, {"DLS": level(low), "DHS": level(hi), "VTX": vtx},
                 {"mode": "behavioral", "delay_on": delay_on, "delay_off": delay_off,
                  "active": {"DLS": low, "DHS": hi}})


PROBES = ("DLS", "DHS", "TA", "TB", "MID", "D12", "D14", "D15")


def transient_bridge(cfg: HalfBridgeConfig, stim: BridgeStimulus, opts: SimOptions | None = None) -> Trace:
    """Full transient of the stacked-oscillator circuit.

    Adds ``VTX = V(TB) - V(TA)``, the voltage across the oscillator stack.
    """
    if opts is None:
        opts = SimOptions(t_stop=stim.duration, dt_max=default_dt_max(f_osc=20e6), probes=PROBES)
    tr = transient(build_halfbridge(cfg, stim.a, stim.b), opts)
    if "TA" in tr and "TB" in tr:
        tr = tr.with_channel("VTX", tr["TB"] - tr["TA"])
    return tr


def body_diode_current(trace: Trace, cfg: HalfBridgeConfig) -> dict[str, np.ndarray]:
    """Forward current in the body diodes of Q12/Q13 and Q14/Q15 (source to drain)."""
    p = cfg.mosfet.body_diode
    mid = trace["MID"]
    drains = {"Q12": "D12", "Q13": "TA", "Q14": "D14", "Q15": "D15"}
    return {q: np.array([diode_i(p, v) for v in mid - trace[d]]) for q, d in drains.items()}


@dataclass(frozen=True)
class Lockout:
    lockout_ok: bool
    overlap_worst: float
    overlap_total: float


def lockout_check(trace: Trace, v_active: float = V_ACTIVE, t_start: float | None = None) -> Lockout:
    """Scan for spans where DLS and DHS are both below ``v_active``.

    Lockout holds if the longest such span is under two sample intervals.
    """
    t = trace.time
    m = np.ones(len(t), bool) if t_start is None else t >= t_start
    both = (trace["DLS"] < v_active) & (trace["DHS"] < v_active) & m
    dt = trace.dt
    worst = 0
    run = 0
    for v in both:
        run = run + 1 if v else 0
        worst = max(worst, run)
    worst_s = worst * dt
    return Lockout(bool(worst_s < 2 * dt), float(worst_s), float(both.sum() * dt))


@dataclass(frozen=True)
class DeadTimes:
    low_to_high: tuple[float, ...]  # DLS release -> DHS assert
    high_to_low: tuple[float, ...]  # DHS release -> DLS assert

    @staticmethod
    def _stats(v):
        return (float(np.min(v)), float(np.mean(v))) if len(v) else (float("nan"), float("nan"))

    @property
    def low_to_high_stats(self) -> tuple[float, float]:
        return self._stats(self.low_to_high)

    @property
    def high_to_low_stats(self) -> tuple[float, float]:
        return self._stats(self.high_to_low)


def dead_time(trace: Trace, v_active: float = V_ACTIVE, t_start: float | None = None) -> DeadTimes:
    """Gap between one output leaving the active level and the other entering it.

    Both edges are taken at ``v_active``. A handover is an assertion of one
    output paired with the first release of the other after that other's
    previous assertion; overlap gives a negative value.
    """
    t = trace.time
    m = np.ones(len(t), bool) if t_start is None else t >= t_start
    tt = t[m]
    ev = {}
    for name in ("DLS", "DHS"):
        y = trace[name][m]
        ev[name] = (falling_crossings(tt, y, v_active), rising_crossings(tt, y, v_active))

    def handovers(new: str, old: str):
        asserts_new, _ = ev[new]
        asserts_old, releases_old = ev[old]
        out = []
        for ta in asserts_new:
            prev = asserts_old[asserts_old < ta]
            if len(prev) == 0:
                continue
            rel = releases_old[releases_old > prev[-1]]
            if len(rel):
                out.append(float(ta - rel[0]))
        return tuple(out)

    res = DeadTimes(handovers("DHS", "DLS"), handovers("DLS", "DHS"))
    if not res.low_to_high and not res.high_to_low:
        raise MeasurementError("no handovers found")
    return res


@dataclass(frozen=True)
class BridgeMetrics:
    lockout_ok: bool
    overlap_worst: float
    dead_time_low_to_high_min: float
    dead_time_low_to_high_mean: float
    dead_time_high_to_low_min: float
    dead_time_high_to_low_mean: float
    handovers: int
    v_tx_levels: tuple[float, ...]

    def as_dict(self) -> dict:
        return asdict(self)


def vtx_levels(vtx: np.ndarray, resolution: float = 0.5, min_share: float = 0.05) -> tuple[float, ...]:
    """Distinct V_TX plateaus occupying at least ``min_share`` of the samples."""
    q = np.round(np.asarray(vtx) / resolution) * resolution
    vals, counts = np.unique(q, return_counts=True)
    keep = counts >= min_share * len(q)
    return tuple(float(v) + 0.0 for v in vals[keep])


def bridge_metrics(trace: Trace, v_active: float = V_ACTIVE, t_start: float = RX_SETTLE) -> BridgeMetrics:
    lk = lockout_check(trace, v_active, t_start)
    dt = dead_time(trace, v_active, t_start)
    lh, hl = dt.low_to_high_stats, dt.high_to_low_stats
    levels = vtx_levels(trace["VTX"]) if "VTX" in trace else ()
    return BridgeMetrics(lk.lockout_ok, lk.overlap_worst, lh[0], lh[1], hl[0], hl[1],
                         len(dt.low_to_high) + len(dt.high_to_low), levels)


def truth_table(cfg: HalfBridgeConfig, hold: float = 10e-6, dt_max: float | None = None) -> dict:
    """Steady-state outputs for all four input combinations.

    Values are averaged over the last fifth of ``hold``. An output counts as
    active below ``V_ACTIVE`` and inactive above 4 V.
    """
    dt_max = dt_max or default_dt_max(f_osc=20e6)
    rows = {}
    for a in (0, 1):
        for b in (0, 1):
            stim = BridgeStimulus.constant(a, b, hold=hold)
            tr = transient_bridge(cfg, stim, SimOptions(t_stop=hold, dt_max=dt_max, probes=PROBES))
            w = tr.time >= 0.8 * hold
            dls, dhs = tr["DLS"][w], tr["DHS"][w]
            vtx = float(np.mean(tr["VTX"][w]))
            sign = int(np.sign(vtx_level(a, b)))
            want_low, want_high = sign > 0, sign < 0
            ok = (
                (dls.max() < V_ACTIVE if want_low else dls.min() > 4.0)
                and (dhs.max() < V_ACTIVE if want_high else dhs.min() > 4.0)
            )
            rows[(a, b)] = {"dls_max": float(dls.max()), "dls_min": float(dls.min()),
                            "dhs_max": float(dhs.max()), "dhs_min": float(dhs.min()),
                            "vtx": vtx, "expected_vtx": vtx_level(a, b), "ok": bool(ok)}
    return rows
