"""Circuit constructors for the single isolator and the half-bridge variant.

Node names used by the isolator:

    DX   logic input (drives the oscillator supply)
    TXS  oscillator supply after the driver's on-resistance
    D5, D6  drains of the cross-coupled pair, primary winding across them
    S1, S2  secondary winding ends (S1 dotted)
    DY   open-collector output, pulled up to VRX

Receiver wiring: Q7 base on S1, Q8 base on S2, emitters on receiver
ground; R17 from S1 and R18 from S2 to ground. For a positive secondary
voltage Q7's base-emitter junction is shunted by R17 and the loop closes
through R18, so Q7 turns on once the winding voltage exceeds
``Vbe * (1 + R18/R17)``, i.e. twice Vbe with equal resistors. Both windings
share the simulator's single ground reference.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .devices import BjtParams, MosfetParams
from .engine import (
    Bjt,
    Circuit,
    CircuitError,
    CoupledInductors,
    Mosfet,
    Resistor,
    Stimulus,
    VoltageSource,
)
from .engine.transient import KICK_AMPS
from .magnetics import FR4_STACK, REFERENCE_COIL, TransformerModel, extract_transformer

DRIVER_ON_RESISTANCE = 10.0


def reference_transformer(frequency: float = 1e6) -> TransformerModel:
    return extract_transformer(REFERENCE_COIL, FR4_STACK, frequency)


@dataclass(frozen=True)
class IsolatorConfig:
    transformer: TransformerModel = field(default_factory=reference_transformer)
    r_drain_a: float | None = None  # R12, omitted by default
    r_drain_b: float = 1.0e3  # R9
    r_base: float = 1.0e3  # R18
    r_divider: float = 1.0e3  # R17
    r_pullup: float = 5.1e3  # R16
    supply: float = 5.0
    mosfet: MosfetParams = field(default_factory=MosfetParams)
    bjt: BjtParams = field(default_factory=BjtParams)

    def __post_init__(self):
        for name in ("r_drain_b", "r_base", "r_divider", "r_pullup"):
            if not getattr(self, name) > 0:
                raise CircuitError(f"{name} must be > 0")
        if self.r_drain_a is not None and not self.r_drain_a > 0:
            raise CircuitError("r_drain_a must be > 0 or absent")
        if not self.supply > 0:
            raise CircuitError("supply must be > 0")
        if self.transformer.coupling_k >= 1:
            raise CircuitError(f"transformer coupling k={self.transformer.coupling_k:.4g} must be < 1")

    def with_(self, **kw) -> "IsolatorConfig":
        return replace(self, **kw)


@dataclass(frozen=True)
class HalfBridgeConfig:
    transformer_low: TransformerModel = field(default_factory=reference_transformer)  # L1/L2
    transformer_high: TransformerModel = field(default_factory=reference_transformer)  # L3/L4
    r_shared: float = 1.8e3  # R21
    supply_pos: float = 5.0
    supply_neg: float = -5.0
    r_base: float = 1.0e3
    r_divider: float = 1.0e3
    r_pullup: float = 5.1e3
    rx_supply: float = 5.0
    mosfet: MosfetParams = field(default_factory=MosfetParams)
    bjt: BjtParams = field(default_factory=BjtParams)

    def __post_init__(self):
        for name in ("r_shared", "r_base", "r_divider", "r_pullup", "rx_supply", "supply_pos"):
            if not getattr(self, name) > 0:
                raise CircuitError(f"{name} must be > 0")
        if not self.supply_neg < 0:
            raise CircuitError("supply_neg must be < 0")
        for tm in (self.transformer_low, self.transformer_high):
            if tm.coupling_k >= 1:
                raise CircuitError(f"transformer coupling k={tm.coupling_k:.4g} must be < 1")

    def with_(self, **kw) -> "HalfBridgeConfig":
        return replace(self, **kw)


def _receiver(prefix: str, s1: str, s2: str, out: str, vcc: str, supply: float,
              r_base: float, r_divider: float, r_pullup: float, bjt: BjtParams, gnd: str):
    qa, qb = (f"Q7{prefix}", f"Q8{prefix}") if prefix else ("Q7", "Q8")
    ra, rb, rp = (f"R17{prefix}", f"R18{prefix}", f"R16{prefix}") if prefix else ("R17", "R18", "R16")
    return [
        Resistor(ra, s1, gnd, r_divider),
        Resistor(rb, s2, gnd, r_base),
        Bjt(qa, out, s1, gnd, bjt),
        Bjt(qb, out, s2, gnd, bjt),
        Resistor(rp, vcc, out, r_pullup),
        VoltageSource(f"V{vcc}", vcc, gnd, Stimulus.step(supply)),
    ]


def transmitter_elements(cfg: IsolatorConfig, supply_node: str = "TXS", gnd: str = "0") -> list:
    els = [
        Resistor("R9", supply_node, "D6", cfg.r_drain_b),
        Mosfet("Q5", "D5", "D6", gnd, cfg.mosfet),
        Mosfet("Q6", "D6", "D5", gnd, cfg.mosfet),
    ]
    if cfg.r_drain_a is not None:
        els.insert(0, Resistor("R12", supply_node, "D5", cfg.r_drain_a))
    return els


def build_transmitter(cfg: IsolatorConfig, dx: Stimulus) -> Circuit:
    """Transmitter only, primary unloaded (secondary open through a large resistor)."""
    tm = cfg.transformer
    els = [
        VoltageSource("VDX", "DX", "0", dx),
        Resistor("RDRV", "DX", "TXS", DRIVER_ON_RESISTANCE),
        *transmitter_elements(cfg),
        CoupledInductors("XT", "D5", "D6", "S1", "S2", tm),
        Resistor("RLOAD", "S1", "S2", 1e9),
        Resistor("RREF", "S2", "0", 1e9),
    ]
    return Circuit(els, kick=("D5", KICK_AMPS), name="transmitter")


def build_isolator(cfg: IsolatorConfig, dx: Stimulus | None = None) -> Circuit:
    """Complete single-channel isolator driven by logic waveform ``dx``."""
    if dx is None:
        dx = Stimulus.constant(0.0)
    if cfg.transformer.coupling_k >= 1:
        raise CircuitError("transformer coupling must be < 1")
    els = [
        VoltageSource("VDX", "DX", "0", dx),
        Resistor("RDRV", "DX", "TXS", DRIVER_ON_RESISTANCE),
        *transmitter_elements(cfg),
        CoupledInductors("XT", "D5", "D6", "S1", "S2", cfg.transformer),
        *_receiver("", "S1", "S2", "DY", "VRX", cfg.supply, cfg.r_base, cfg.r_divider,
                   cfg.r_pullup, cfg.bjt, "0"),
    ]
    return Circuit(els, kick=("D5", KICK_AMPS), name="isolator")


def build_halfbridge(cfg: HalfBridgeConfig, a: Stimulus, b: Stimulus) -> Circuit:
    """Stacked dual oscillator between logic lines A and B.

    Both cross-coupled pairs are N-channel with their sources on a shared
    node MID. The Q14/Q15 pair (primary L1, drains facing B) runs when
    V_TX = V(B) - V(A) is positive, fed through R21 and returning through
    the Q12/Q13 body diodes; for negative V_TX the roles swap. L1/L2 drives
    the low-side output DLS, L3/L4 the high-side output DHS.

    Node names: TA/TB are the circuit terminals behind the logic drivers'
    on-resistance, D14/D15 and D12/D13 the drains, MID the shared sources.
    """
    m = cfg.mosfet
    els = [
        VoltageSource("VA", "A", "0", a),
        VoltageSource("VB", "B", "0", b),
        Resistor("RDA", "A", "TA", DRIVER_ON_RESISTANCE),
        Resistor("RDB", "B", "TB", DRIVER_ON_RESISTANCE),
        Resistor("R21", "TB", "D15", cfg.r_shared),
        Mosfet("Q14", "D14", "D15", "MID", m),
        Mosfet("Q15", "D15", "D14", "MID", m),
        CoupledInductors("X1", "D14", "D15", "S1L", "S2L", cfg.transformer_low),
        Mosfet("Q12", "D12", "TA", "MID", m),
        Mosfet("Q13", "TA", "D12", "MID", m),
        CoupledInductors("X3", "D12", "TA", "S1H", "S2H", cfg.transformer_high),
    ]
    els += _receiver("L", "S1L", "S2L", "DLS", "VRL", cfg.rx_supply, cfg.r_base,
                     cfg.r_divider, cfg.r_pullup, cfg.bjt, "0")
    els += _receiver("H", "S1H", "S2H", "DHS", "VRH", cfg.rx_supply, cfg.r_base,
                     cfg.r_divider, cfg.r_pullup, cfg.bjt, "0")
    return Circuit(els, kick=("D14", KICK_AMPS), name="halfbridge")
