"""Numerical laboratory for Dyson Brownian motion, the Dyson eigenvector flow
and the eigenvector moment flow."""

__version__ = "0.1.0"
