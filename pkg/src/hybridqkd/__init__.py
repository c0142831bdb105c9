"""Simulation and key-rate analysis for hybrid twin-field / MDI QKD."""

__version__ = "0.1.0"
