"""Simulation of the Tracking-the-King retrodiction protocol and its
linear-optical realization."""

__version__ = "0.1.0"
