"""Adaptive sensitivity-test designs: simulation, inference, and diagnostics."""

__version__ = "0.1.0"
