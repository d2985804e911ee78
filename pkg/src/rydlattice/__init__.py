"""Simulation toolkit for driven-dissipative Rydberg lattice gases."""

__version__ = "0.1.0"
