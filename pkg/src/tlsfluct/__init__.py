"""Fluctuation spectroscopy of two-level systems in superconducting resonators."""

__version__ = "0.1.0"
