"""Fixed-topology nonlinear transient simulator."""

from .circuit import (
    Bjt,
    Capacitor,
    Circuit,
    CircuitError,
    CoupledInductors,
    Diode,
    Inductor,
    Mosfet,
    Resistor,
    SimulationError,
    Stimulus,
    Trace,
    VoltageSource,
)
from .measure import (
    FrequencyMeasurement,
    MeasurementError,
    envelope,
    falling_crossings,
    measure_frequency,
    measure_power,
    measure_startup,
    rising_crossings,
)
from .transient import SimOptions, System, assemble, default_dt_max, transient

__all__ = [
    "Bjt", "Capacitor", "Circuit", "CircuitError", "CoupledInductors", "Diode", "Inductor",
    "Mosfet", "Resistor", "SimulationError", "Stimulus", "Trace", "VoltageSource",
    "FrequencyMeasurement", "MeasurementError", "envelope", "falling_crossings",
    "measure_frequency", "measure_power", "measure_startup", "rising_crossings",
    "SimOptions", "System", "assemble", "default_dt_max", "transient",
]
