"""Digital link stimulus and measurements: PRBS/NRZ, delay, eye, bit errors."""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field

import numpy as np

from .engine import SimOptions, Stimulus, Trace, default_dt_max, falling_crossings, rising_crossings, transient
from .engine.measure import MeasurementError
from .topologies import IsolatorConfig, build_isolator


class LinkError(ValueError):
    pass


@dataclass(frozen=True)
class BitPattern:
    bits: tuple[int, ...]
    bit_rate: float = 1e6
    low: float = 0.0
    high: float = 5.0
    rise_fall: float = 10e-9

    def __post_init__(self):
        bits = tuple(int(b) for b in self.bits)
        if any(b not in (0, 1) for b in bits):
            raise LinkError("bits must be 0 or 1")
        object.__setattr__(self, "bits", bits)
        if not self.bit_rate > 0:
            raise LinkError("bit_rate must be > 0")
        if not 0 < self.rise_fall < 0.2 / self.bit_rate:
            raise LinkError("rise_fall must be in (0, 0.2 / bit_rate)")

    @property
    def bit_period(self) -> float:
        return 1.0 / self.bit_rate

    @property
    def duration(self) -> float:
        return len(self.bits) * self.bit_period

    def __len__(self):
        return len(self.bits)


def prbs7(seed: int, n: int) -> list[int]:
    """PRBS7 sequence from the Fibonacci LFSR x^7 + x^6 + 1.

    Each step emits the feedback bit and shifts it into the register, so the
    output repeats with period 127 for any nonzero seed.
    """
    seed = int(seed)
    if not 0 < seed < 128:
        raise LinkError("prbs7 seed must be a nonzero 7-bit value")
    if n < 0:
        raise LinkError("n must be >= 0")
    state = seed
    out = []
    for _ in range(n):
        fb = ((state >> 6) ^ (state >> 5)) & 1
        state = ((state << 1) | fb) & 0x7F
        out.append(fb)
    return out


def nrz_stimulus(p: BitPattern) -> Stimulus:
    """Piecewise-linear NRZ waveform; edges start at bit boundaries."""
    if not p.bits:
        return Stimulus.constant(p.low)
    level = lambda b: p.high if b else p.low  # noqa: E731
    T = p.bit_period
    pts = [(0.0, level(p.bits[0]))]
    for k in range(1, len(p.bits)):
        if p.bits[k] != p.bits[k - 1]:
            t = k * T
            pts.append((t, level(p.bits[k - 1])))
            pts.append((t + p.rise_fall, level(p.bits[k])))
    end = len(p.bits) * T
    if end > pts[-1][0]:
        pts.append((end, level(p.bits[-1])))
    return Stimulus(tuple(pts))


@dataclass(frozen=True)
class DelayStats:
    mean: float
    max: float
    min: float
    count: int

    @classmethod
    def of(cls, delays) -> "DelayStats":
        d = np.asarray(delays, dtype=float)
        if len(d) == 0:
            return cls(float("nan"), float("nan"), float("nan"), 0)
        return cls(float(d.mean()), float(d.max()), float(d.min()), len(d))


@dataclass(frozen=True)
class DelayResult:
    rise: DelayStats  # input rising edges
    fall: DelayStats  # input falling edges
    lost_edges: int

    @property
    def mean(self) -> float:
        n = self.rise.count + self.fall.count
        if n == 0:
            return float("nan")
        total = (self.rise.mean * self.rise.count if self.rise.count else 0.0) + (
            self.fall.mean * self.fall.count if self.fall.count else 0.0
        )
        return total / n


def propagation_delay(time, inp, out, v_threshold: float = 2.5, output_inverted: bool = False) -> DelayResult:
    """Delay from each input threshold crossing to the matching output crossing.

    An output edge only counts if it arrives before the next input edge;
    input edges without one are reported as lost.
    """
    time = np.asarray(time, dtype=float)
    inp = np.asarray(inp, dtype=float)
    out = np.asarray(out, dtype=float)
    edges = sorted(
        [(t, True) for t in rising_crossings(time, inp, v_threshold)]
        + [(t, False) for t in falling_crossings(time, inp, v_threshold)]
    )
    if not edges:
        raise MeasurementError("input has no threshold crossings")
    out_rise = rising_crossings(time, out, v_threshold)
    out_fall = falling_crossings(time, out, v_threshold)
    rise, fall, lost = [], [], 0
    for k, (t, rising) in enumerate(edges):
        t_next = edges[k + 1][0] if k + 1 < len(edges) else np.inf
        cand = out_rise if rising != output_inverted else out_fall
        j = np.searchsorted(cand, t)
        if j < len(cand) and cand[j] < t_next:
            (rise if rising else fall).append(cand[j] - t)
        else:
            lost += 1
    return DelayResult(DelayStats.of(rise), DelayStats.of(fall), lost)


@dataclass
class EyeDiagram:
    height: float
    width: float
    bit_period: float
    phase: np.ndarray  # (samples_per_ui,)
    folded: np.ndarray  # (intervals, samples_per_ui)
    bit_class: np.ndarray  # (intervals,) recovered bit per interval

    def to_csv(self, path_or_file) -> None:
        """Folded samples as ``phase_s, voltage_v, bit_class`` rows."""
        own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
        fh = open(path_or_file, "w", newline="") if own else path_or_file
        try:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["phase_s", "voltage_v", "bit_class"])
            for row, cls in zip(self.folded, self.bit_class):
                for ph, v in zip(self.phase, row):
                    w.writerow([repr(float(ph)), repr(float(v)), int(cls)])
        finally:
            if own:
                fh.close()


def _longest_circular_run(mask: np.ndarray) -> int:
    if mask.all():
        return len(mask)
    # rotate so the sequence starts just after a False
    k = int(np.argmin(mask))
    m = np.roll(mask, -k)
    best = run = 0
    for v in m:
        run = run + 1 if v else 0
        best = max(best, run)
    return best


def eye_diagram(time, y, bit_period: float, alignment_offset: float = 0.0,
                v_threshold: float = 2.5, band: float = 0.5) -> EyeDiagram:
    """Fold ``y`` modulo the bit period and measure the eye opening.

    Unit intervals start at ``alignment_offset + k * bit_period``. Height is
    the gap between the rails over the central 20% of the interval, each
    interval assigned to a rail by its mid-point value. Width is the longest
    phase span (wrapping) over which no folded sample enters
    ``v_threshold +/- band``.
    """
    time = np.asarray(time, dtype=float)
    y = np.asarray(y, dtype=float)
    if not bit_period > 0:
        raise MeasurementError("bit_period must be > 0")
    t0 = time[0] + alignment_offset
    n_ui = int(np.floor((time[-1] - t0) / bit_period * (1 + 1e-12)))
    if n_ui < 20:
        raise MeasurementError(f"trace spans {n_ui} unit intervals; need at least 20")
    dt = time[1] - time[0]
    spu = max(int(round(bit_period / dt)), 8)
    phase = np.arange(spu) * (bit_period / spu)
    grid = t0 + np.arange(n_ui)[:, None] * bit_period + phase[None, :]
    folded = np.interp(grid, time, y)
    mid = np.interp(t0 + (np.arange(n_ui) + 0.5) * bit_period, time, y)
    bit_class = (mid > v_threshold).astype(int)
    if bit_class.min() == bit_class.max():
        raise MeasurementError("no transitions; eye undefined")
    c0, c1 = int(np.floor(0.4 * spu)), int(np.ceil(0.6 * spu))
    centre = folded[:, c0:c1 + 1]
    height = float(centre[bit_class == 1].min() - centre[bit_class == 0].max())
    clear = np.all(np.abs(folded - v_threshold) > band, axis=0)
    width = _longest_circular_run(clear) * bit_period / spu
    return EyeDiagram(height, float(width), bit_period, phase, folded, bit_class)


@dataclass(frozen=True)
class BitCheck:
    errors: int
    checked: int
    latency_bits: int
    error_positions: tuple[int, ...] = field(default=(), repr=False)


def check_bits(time, y, sent: BitPattern, sample_offset: float = 0.0, output_inverted: bool = False,
               v_threshold: float = 2.5, max_latency_bits: int = 8) -> BitCheck:
    """Sample each bit at its centre plus ``sample_offset`` and compare.

    The integer-bit latency is the shift in ``[0, max_latency_bits]`` with the
    best agreement; a runner-up within 5% of it is treated as ambiguous.
    """
    T = sent.bit_period
    if not -0.5 * T <= sample_offset < 0.5 * T:
        raise LinkError("sample_offset must lie within the bit period")
    time = np.asarray(time, dtype=float)
    y = np.asarray(y, dtype=float)
    ts = (np.arange(len(sent.bits) + max_latency_bits) + 0.5) * T + sample_offset + time[0]
    ts = ts[(ts >= time[0]) & (ts <= time[-1])]
    rx = (np.interp(ts, time, y) > v_threshold).astype(int)
    if output_inverted:
        rx = 1 - rx
    tx = np.asarray(sent.bits, dtype=int)
    scores = []
    for lat in range(max_latency_bits + 1):
        n = min(len(tx), len(rx) - lat)
        if n <= 0:
            break
        scores.append((float(np.mean(rx[lat:lat + n] == tx[:n])), lat, n))
    if not scores:
        raise LinkError("trace too short to sample any bit")
    ranked = sorted(scores, key=lambda s: (-s[0], s[1]))
    best, lat, n = ranked[0]
    if len(ranked) > 1 and ranked[1][0] >= best - 0.05:
        raise LinkError(f"latency ambiguous: shifts {lat} and {ranked[1][1]} agree "
                        f"{best:.3f} / {ranked[1][0]:.3f}")
    bad = np.nonzero(rx[lat:lat + n] != tx[:n])[0]
    return BitCheck(int(len(bad)), int(n), lat, tuple(int(i) for i in bad))


@dataclass(frozen=True)
class LinkMetrics:
    prop_delay_rise_mean: float
    prop_delay_rise_max: float
    prop_delay_fall_mean: float
    prop_delay_fall_max: float
    prop_delay_mean: float
    lost_edges: int
    eye_height: float
    eye_width: float
    bit_errors: int
    bits_checked: int

    def as_dict(self) -> dict:
        return asdict(self)


def simulate_link(cfg: IsolatorConfig, pattern: BitPattern, dt_max: float | None = None,
                  output_decimation: int = 4, f_osc: float = 20e6) -> Trace:
    """Transient of the isolator driven by ``pattern``; keeps DX, DY and supplies."""
    if dt_max is None:
        dt_max = default_dt_max(pattern.bit_period, f_osc)
    opts = SimOptions(t_stop=pattern.duration, dt_max=dt_max, output_decimation=output_decimation,
                      probes=("DX", "DY"))
    return transient(build_isolator(cfg, nrz_stimulus(pattern)), opts)


def link_metrics(trace: Trace, pattern: BitPattern, v_threshold: float = 2.5,
                 settle_bits: int = 2) -> LinkMetrics:
    """Delay, eye and bit-error figures for an isolator trace (output inverted).

    The first ``settle_bits`` intervals (receiver supply ramp) are left out of
    the delay and eye statistics.
    """
    T = pattern.bit_period
    w = trace.time >= settle_bits * T
    t, dx, dy = trace.time[w], trace["DX"][w], trace["DY"][w]
    delay = propagation_delay(t, dx, dy, v_threshold, output_inverted=True)
    eye = eye_diagram(t, dy, T, alignment_offset=delay.mean if np.isfinite(delay.mean) else 0.0,
                      v_threshold=v_threshold)
    bits = check_bits(trace.time, trace["DY"], pattern, 0.0, output_inverted=True, v_threshold=v_threshold)
    return LinkMetrics(
        delay.rise.mean, delay.rise.max, delay.fall.mean, delay.fall.max, delay.mean,
        delay.lost_edges, eye.height, eye.width, bits.errors, bits.checked,
    )
