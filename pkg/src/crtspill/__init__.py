"""Simulation, estimation and inference for cluster randomized trials with
noncompliance and within-cluster spillovers."""

__version__ = "0.1.0"
