"""Circuit, stimulus and trace containers."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Union

import numpy as np

from ..devices import BjtParams, DiodeParams, MosfetParams
from ..magnetics import TransformerModel


class CircuitError(ValueError):
    """Invalid circuit description or topology."""


class SimulationError(RuntimeError):
    """Transient analysis failed (non-convergence or non-finite values)."""

    def __init__(self, message: str, time: float | None = None, unknown: str | None = None):
        super().__init__(message)
        self.time = time
        self.unknown = unknown


@dataclass(frozen=True)
class Stimulus:
    """Piecewise-linear waveform; holds its first/last value outside the points."""

    points: tuple[tuple[float, float], ...]

    def __post_init__(self):
        pts = tuple((float(t), float(v)) for t, v in self.points)
        if not pts:
            raise CircuitError("stimulus needs at least one point")
        times = [t for t, _ in pts]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise CircuitError("stimulus times must be strictly increasing")
        if not all(math.isfinite(t) and math.isfinite(v) for t, v in pts):
            raise CircuitError("stimulus values must be finite")
        object.__setattr__(self, "points", pts)

    @classmethod
    def constant(cls, value: float) -> "Stimulus":
        return cls(((0.0, value),))

    @classmethod
    def step(cls, value: float, t_on: float = 0.0, rise: float = 10e-9, v0: float = 0.0) -> "Stimulus":
        """``v0`` until ``t_on``, then a linear ramp to ``value`` over ``rise``."""
        if t_on <= 0:
            return cls(((0.0, v0), (rise, value)))
        return cls(((0.0, v0), (t_on, v0), (t_on + rise, value)))

    @property
    def times(self) -> np.ndarray:
        return np.array([t for t, _ in self.points])

    @property
    def values(self) -> np.ndarray:
        return np.array([v for _, v in self.points])

    def __call__(self, t):
        return np.interp(t, self.times, self.values)

    @property
    def duration(self) -> float:
        return self.points[-1][0]


@dataclass(frozen=True)
class Resistor:
    name: str
    a: str
    b: str
    ohms: float


@dataclass(frozen=True)
class Capacitor:
    name: str
    a: str
    b: str
    farads: float


@dataclass(frozen=True)
class Inductor:
    name: str
    a: str
    b: str
    henries: float
    r_series: float = 0.0


@dataclass(frozen=True)
class CoupledInductors:
    """Two windings ``a1 -> b1`` and ``a2 -> b2``; dots on ``a1`` and ``a2``."""

    name: str
    a1: str
    b1: str
    a2: str
    b2: str
    transformer: TransformerModel


@dataclass(frozen=True)
class VoltageSource:
    name: str
    p: str
    m: str
    stimulus: Stimulus


@dataclass(frozen=True)
class Mosfet:
    name: str
    d: str
    g: str
    s: str
    params: MosfetParams = field(default_factory=MosfetParams)


@dataclass(frozen=True)
class Bjt:
    name: str
    c: str
    b: str
    e: str
    params: BjtParams = field(default_factory=BjtParams)


@dataclass(frozen=True)
class Diode:
    name: str
    a: str
    k: str
    params: DiodeParams = field(default_factory=DiodeParams)


Element = Union[Resistor, Capacitor, Inductor, CoupledInductors, VoltageSource, Mosfet, Bjt, Diode]


@dataclass(frozen=True)
class Circuit:
    """A fixed-topology netlist.

    ``kick`` optionally names a node and a current (amps) injected during the
    first time step only, to push an ideal symmetric oscillator off its
    unstable equilibrium.
    """

    elements: tuple
    ground: str = "0"
    kick: tuple[str, float] | None = None
    name: str = "circuit"

    def __post_init__(self):
        object.__setattr__(self, "elements", tuple(self.elements))
        names = [e.name for e in self.elements]
        dup = {n for n in names if names.count(n) > 1}
        if dup:
            raise CircuitError(f"duplicate element names: {sorted(dup)}")

    def element(self, name: str):
        for e in self.elements:
            if e.name == name:
                return e
        raise KeyError(name)

    def of_type(self, kind) -> list:
        return [e for e in self.elements if isinstance(e, kind)]

    def replace(self, name: str, new) -> "Circuit":
        els = tuple(new if e.name == name else e for e in self.elements)
        return Circuit(els, self.ground, self.kick, self.name)

    def nodes(self) -> list[str]:
        """Non-ground nodes in order of first appearance."""
        seen: dict[str, None] = {}
        for e in self.elements:
            for n in terminals(e):
                if n != self.ground:
                    seen.setdefault(n, None)
        return list(seen)


def terminals(e) -> tuple[str, ...]:
    if isinstance(e, (Resistor, Capacitor, Inductor)):
        return (e.a, e.b)
    if isinstance(e, CoupledInductors):
        return (e.a1, e.b1, e.a2, e.b2)
    if isinstance(e, VoltageSource):
        return (e.p, e.m)
    if isinstance(e, Mosfet):
        return (e.d, e.g, e.s)
    if isinstance(e, Bjt):
        return (e.c, e.b, e.e)
    if isinstance(e, Diode):
        return (e.a, e.k)
    raise CircuitError(f"unknown element type {type(e).__name__}")


@dataclass
class Trace:
    """Uniformly sampled simulation output."""

    time: np.ndarray
    channels: dict[str, np.ndarray]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.time)
        for k, v in self.channels.items():
            if len(v) != n:
                raise ValueError(f"channel {k!r} has {len(v)} samples, time axis has {n}")

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self.channels[name]
        except KeyError:
            raise KeyError(f"no channel {name!r}; have {sorted(self.channels)}") from None

    def __contains__(self, name: str) -> bool:
        return name in self.channels

    @property
    def dt(self) -> float:
        return float(self.time[1] - self.time[0]) if len(self.time) > 1 else 0.0

    def window(self, t0: float, t1: float) -> "Trace":
        mask = (self.time >= t0) & (self.time <= t1)
        return Trace(self.time[mask], {k: v[mask] for k, v in self.channels.items()}, dict(self.metadata))

    def with_channel(self, name: str, values: Iterable[float]) -> "Trace":
        ch = dict(self.channels)
        ch[name] = np.asarray(values, dtype=float)
        return Trace(self.time, ch, dict(self.metadata))

    def to_csv(self, path_or_file, channels: list[str] | None = None) -> None:
        names = list(self.channels) if channels is None else channels
        own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
        fh = open(path_or_file, "w", newline="") if own else path_or_file
        try:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["time_s", *names])
            cols = [self.time] + [self.channels[n] for n in names]
            for row in zip(*cols):
                w.writerow([repr(float(v)) for v in row])
        finally:
            if own:
                fh.close()

    @classmethod
    def from_csv(cls, path) -> "Trace":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], np.array(rows[1:], dtype=float)
        if header[0] != "time_s":
            raise ValueError("first CSV column must be time_s")
        return cls(body[:, 0], {h: body[:, i + 1] for i, h in enumerate(header[1:])})
