"""solitonlab: numerical laboratory for cohomogeneity-one Ricci solitons.

Integrates the 8-dimensional polynomial phase flow for soliton metrics on
complex line bundles over CP^{2m+1}, seeds trajectories from the unstable
manifold of the singular-orbit critical point, classifies their asymptotic
geometry, and searches for the shooting-parameter thresholds separating the
dynamical regimes.
"""
from solitonlab.phase import ModelParams

__version__ = "0.1.0"

__all__ = ["ModelParams", "__version__"]
