"""Simulation and verification toolkit for the Ewens-Pitman model with theta = lambda * n."""

__version__ = "0.1.0"
