"""Quasi-periodic response solutions of forced systems with degenerate equilibria."""

__version__ = "0.1.0"
