"""Driving-volatility measures from connected-vehicle trajectories and crash-frequency models."""

__version__ = "0.1.0"
