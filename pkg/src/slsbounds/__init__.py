"""Penalized MLE, Laplace approximation certificates and brute-force oracles."""

__version__ = "0.1.0"
