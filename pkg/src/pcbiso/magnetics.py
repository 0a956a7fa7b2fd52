"""Planar spiral coil extraction for a two-sided PCB air-core transformer.

Self inductance uses the current-sheet approximation for square spirals
(Mohan et al., "Simple Accurate Expressions for Planar Spiral Inductances",
IEEE JSSC 1999). Coupling between the two board faces is obtained by
summing Neumann integrals over square filaments, one per turn, placed on
the turn centerline (Greenhouse discretization).

All lengths are SI meters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

MU0 = 4e-7 * math.pi
COPPER_RESISTIVITY = 1.68e-8  # ohm*m at 20 C

# current-sheet coefficients for a square spiral
_C1, _C2, _C3, _C4 = 1.27, 2.07, 0.18, 0.13


class GeometryError(ValueError):
    """Raised for a geometry or stack that violates its invariants."""


@dataclass(frozen=True)
class CoilGeometry:
    turns: int
    trace_width: float
    trace_spacing: float
    inner_side: float
    copper_thickness: float
    shape: str = "square"

    def __post_init__(self):
        if self.shape != "square":
            raise GeometryError(f"shape: only 'square' is supported, got {self.shape!r}")
        if int(self.turns) != self.turns or self.turns < 1:
            raise GeometryError(f"turns must be an integer >= 1, got {self.turns}")
        if not self.trace_width > 0:
            raise GeometryError(f"trace_width must be > 0, got {self.trace_width}")
        if not self.trace_spacing >= 0:
            raise GeometryError(f"trace_spacing must be >= 0, got {self.trace_spacing}")
        if not self.inner_side > 0:
            raise GeometryError(f"inner_side must be > 0, got {self.inner_side}")
        if not self.copper_thickness > 0:
            raise GeometryError(f"copper_thickness must be > 0, got {self.copper_thickness}")

    def scaled(self, factor: float) -> "CoilGeometry":
        """Same coil with every length multiplied by ``factor``."""
        return CoilGeometry(
            self.turns,
            self.trace_width * factor,
            self.trace_spacing * factor,
            self.inner_side * factor,
            self.copper_thickness * factor,
        )


@dataclass(frozen=True)
class BoardStack:
    board_thickness: float
    dielectric_strength: float
    copper_resistivity: float = COPPER_RESISTIVITY

    def __post_init__(self):
        if not self.board_thickness >= 0:
            raise GeometryError(f"board_thickness must be >= 0, got {self.board_thickness}")
        if not self.dielectric_strength > 0:
            raise GeometryError(
                f"dielectric_strength must be > 0, got {self.dielectric_strength}"
            )
        if not self.copper_resistivity > 0:
            raise GeometryError(
                f"copper_resistivity must be > 0, got {self.copper_resistivity}"
            )


@dataclass(frozen=True)
class TransformerModel:
    """Lumped electrical image of the coupled PCB coils."""

    l_primary: float
    l_secondary: float
    mutual: float
    r_series_primary: float = 0.0
    r_series_secondary: float = 0.0
    extraction_frequency: float = 1e6

    def __post_init__(self):
        if not (self.l_primary > 0 and self.l_secondary > 0):
            raise GeometryError("inductances must be > 0")
        if self.mutual < 0:
            raise GeometryError("mutual inductance must be >= 0")
        if self.r_series_primary < 0 or self.r_series_secondary < 0:
            raise GeometryError("series resistance must be >= 0")

    @property
    def coupling_k(self) -> float:
        return self.mutual / math.sqrt(self.l_primary * self.l_secondary)

    @classmethod
    def from_coupling(cls, l_primary, l_secondary, k, **kw) -> "TransformerModel":
        return cls(l_primary, l_secondary, k * math.sqrt(l_primary * l_secondary), **kw)

    def as_dict(self) -> dict:
        return {
            "l_primary": self.l_primary,
            "l_secondary": self.l_secondary,
            "mutual": self.mutual,
            "coupling_k": self.coupling_k,
            "r_series_primary": self.r_series_primary,
            "r_series_secondary": self.r_series_secondary,
            "extraction_frequency": self.extraction_frequency,
        }


def outer_side(geom: CoilGeometry) -> float:
    """Outer side length of the spiral footprint."""
    n = geom.turns
    return geom.inner_side + 2 * (n * geom.trace_width + (n - 1) * geom.trace_spacing)


def average_side(geom: CoilGeometry) -> float:
    return 0.5 * (outer_side(geom) + geom.inner_side)


def fill_ratio(geom: CoilGeometry) -> float:
    d_out = outer_side(geom)
    return (d_out - geom.inner_side) / (d_out + geom.inner_side)


def current_sheet_inductance(turns: float, d_avg: float, rho: float) -> float:
    """Current-sheet inductance of a square spiral from n, d_avg and fill ratio."""
    if not 0 < rho < 1:
        raise GeometryError(f"fill ratio must lie in (0, 1), got {rho}")
    return (
        _C1 * MU0 * turns**2 * d_avg / 2
        * (math.log(_C2 / rho) + _C3 * rho + _C4 * rho**2)
    )


def self_inductance(geom: CoilGeometry) -> float:
    """Self inductance of a square planar spiral (henries)."""
    return current_sheet_inductance(geom.turns, average_side(geom), fill_ratio(geom))


def turn_sides(geom: CoilGeometry) -> np.ndarray:
    """Centerline side length of each turn, innermost first."""
    k = np.arange(geom.turns)
    pitch = geom.trace_width + geom.trace_spacing
    return geom.inner_side + geom.trace_width + 2 * k * pitch


def _neumann_kernel(u, d):
    # second antiderivative of 1/sqrt(u^2 + d^2)
    return u * np.arcsinh(u / d) - np.sqrt(u * u + d * d)


def _parallel_segments(a1, b1, a2, b2, d):
    """Mutual inductance of two parallel filaments [a1,b1], [a2,b2] at distance d."""
    g = _neumann_kernel
    return MU0 / (4 * math.pi) * (g(b2 - a1, d) - g(a2 - a1, d) - g(b2 - b1, d) + g(a2 - b1, d))


def _square_filament_mutual(a, b, z, gmd):
    """Mutual inductance of coaxial, parallel square loops of sides a and b.

    Loops lie in planes ``z`` apart. Filament pairs that share a footprint
    (same side, same lateral position) use ``sqrt(z^2 + gmd^2)`` for their
    distance so the result stays finite as ``z -> 0``.
    """
    # by symmetry only the x-directed sides need summing; y sides give the same
    total = 0.0
    for ya, sa in ((a / 2, 1.0), (-a / 2, -1.0)):
        for yb, sb in ((b / 2, 1.0), (-b / 2, -1.0)):
            lateral = abs(ya - yb)
            d = math.hypot(lateral, z)
            if lateral == 0.0:
                d = math.hypot(z, gmd)
            total += sa * sb * _parallel_segments(-a / 2, a / 2, -b / 2, b / 2, d)
    return 2 * total


def filament_inductance(geom1: CoilGeometry, geom2: CoilGeometry, separation: float) -> float:
    """Filament-sum inductance between two coaxial coils ``separation`` apart.

    With ``geom1 == geom2`` and ``separation == 0`` this is the filament
    estimate of the coil self inductance.
    """
    gmd = 0.2235 * (geom1.trace_width + geom1.copper_thickness)
    total = 0.0
    for a in turn_sides(geom1):
        for b in turn_sides(geom2):
            total += _square_filament_mutual(a, b, separation, gmd)
    return total


def mutual_inductance(
    geom: CoilGeometry, separation: float, geom2: CoilGeometry | None = None
) -> tuple[float, float]:
    """Mutual inductance and coupling coefficient of two stacked coils.

    The coupling coefficient is the filament-sum mutual normalized by the
    filament self inductances of both coils, which keeps it in (0, 1). The
    returned mutual applies that coefficient to the current-sheet self
    inductances so the pair stays passive.

    Returns:
        (mutual, coupling_k)
    """
    if not separation > 0:
        raise GeometryError(f"separation must be > 0, got {separation}")
    geom2 = geom if geom2 is None else geom2
    m_fil = filament_inductance(geom, geom2, separation)
    l1_fil = filament_inductance(geom, geom, 0.0)
    l2_fil = filament_inductance(geom2, geom2, 0.0)
    k = m_fil / math.sqrt(l1_fil * l2_fil)
    k = min(max(k, 0.0), math.nextafter(1.0, 0.0))
    mutual = k * math.sqrt(self_inductance(geom) * self_inductance(geom2))
    return mutual, k


def trace_length(geom: CoilGeometry) -> float:
    return 4 * geom.turns * average_side(geom)


def skin_depth(frequency: float, resistivity: float = COPPER_RESISTIVITY) -> float:
    denom = math.pi * frequency * MU0
    if denom <= 0:  # also catches subnormal frequencies that underflow
        return math.inf
    return math.sqrt(resistivity / denom)


def series_resistance(geom: CoilGeometry, stack: BoardStack, frequency: float = 0.0) -> float:
    """Coil series resistance with a thickness-clamping skin-effect correction.

    Proximity effect is ignored, so the AC value is a lower bound.
    """
    if frequency < 0:
        raise GeometryError(f"frequency must be >= 0, got {frequency}")
    rho = stack.copper_resistivity
    r_dc = rho * trace_length(geom) / (geom.trace_width * geom.copper_thickness)
    if frequency == 0:
        return r_dc
    t_eff = min(geom.copper_thickness, skin_depth(frequency, rho))
    return r_dc * geom.copper_thickness / t_eff


def breakdown_voltage(stack: BoardStack) -> float:
    """First-order through-board breakdown voltage."""
    return stack.board_thickness * stack.dielectric_strength


def extract_transformer(
    geom: CoilGeometry,
    stack: BoardStack,
    frequency: float = 1e6,
    geom2: CoilGeometry | None = None,
) -> TransformerModel:
    """Coupled-inductor model for coils on opposite faces of ``stack``."""
    geom2 = geom if geom2 is None else geom2
    mutual, _ = mutual_inductance(geom, stack.board_thickness, geom2)
    return TransformerModel(
        l_primary=self_inductance(geom),
        l_secondary=self_inductance(geom2),
        mutual=mutual,
        r_series_primary=series_resistance(geom, stack, frequency),
        r_series_secondary=series_resistance(geom2, stack, frequency),
        extraction_frequency=frequency,
    )


def extraction_report(
    geom: CoilGeometry, stack: BoardStack, frequency: float = 1e6
) -> dict:
    """JSON-ready extraction results."""
    tm = extract_transformer(geom, stack, frequency)
    report = tm.as_dict()
    report["breakdown_voltage"] = breakdown_voltage(stack)
    report["outer_side"] = outer_side(geom)
    return report


REFERENCE_COIL = CoilGeometry(
    turns=8,
    trace_width=200e-6,
    trace_spacing=200e-6,
    inner_side=9.7e-3,
    copper_thickness=35e-6,
)
FR4_STACK = BoardStack(board_thickness=1.6e-3, dielectric_strength=20e6)
