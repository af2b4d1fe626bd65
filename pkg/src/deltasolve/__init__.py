"""Solvers for the 1D Schrödinger equation with finitely many δ-interactions."""

__version__ = "0.1.0"
