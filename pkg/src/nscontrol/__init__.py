"""Pseudo-spectral Navier–Stokes experiments on large-time asymptotics under forcing control.

Modules
-------
grid, operators, kernel      periodic grid, Fourier operators, Oseen-type kernel
initial_data, forcing        test initial data and separable forcing profiles
norms, besov                 Lebesgue / trajectory / Hdot^-1 norms, infrared Besov diagnostics
solver                       ETD2 integrator for the forced equations with Picard checks
control                      energy matrix and the forcing fixed-point iteration
asymptotics                  profile-gap verification and decay fits
config, cli                  structured-text configuration and the command line
"""
from .grid import Grid, SpectralField, VectorField, SymTensorField

__version__ = "0.1.0"

__all__ = ["Grid", "SpectralField", "VectorField", "SymTensorField", "__version__"]
