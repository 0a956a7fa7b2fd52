"""Discrete PCB-transformer digital isolator: extraction, simulation, measurement."""

__version__ = "0.1.0"
