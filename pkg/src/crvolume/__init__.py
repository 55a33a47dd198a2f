"""Pseudohermitian invariants, volume renormalization and Chern-Gauss-Bonnet
checks for strictly pseudoconvex domains in C^2."""

__version__ = "0.1.0"
