"""Simulation lab for mixture exposures in linear Gaussian structural equation models."""

__version__ = "0.1.0"
