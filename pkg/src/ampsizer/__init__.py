"""Sizing optimisation for analog amplifier testbenches under PVT corners."""

__version__ = "0.1.0"
