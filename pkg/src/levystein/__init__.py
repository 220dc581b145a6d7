"""Convergence rates of high-frequency Lévy statistics to their mixed-Gaussian limits.

Simulation of symmetric stable and Brownian paths, window statistics with exact
cosine-family oracles, a numerical Stein solver, certified smooth-metric
estimates and stable-convergence diagnostics.
"""
from levystein.levy import GridSpec, LevyModel, ModelKind, ParameterError, PathSample, sample_path
from levystein.rng import Role, RngStream

__all__ = ["GridSpec", "LevyModel", "ModelKind", "ParameterError", "PathSample", "Role", "RngStream", "sample_path"]
__version__ = "0.1.0"
