"""Simulation, equivalent-circuit extraction and figures of merit for mmWave FBARs."""

__version__ = "0.1.0"
