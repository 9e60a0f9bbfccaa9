"""Spectral simulation of the stochastic fractional heat equation and a verification harness
for the Gaussian fluctuations of its spatial averages."""

__version__ = "0.1.0"
