"""Spherical designs, moment matching and hard instances for mixtures of
linear classifiers."""

__version__ = "0.1.0"

from sphereforge.kernels import BACKEND

__all__ = ["BACKEND", "__version__"]
