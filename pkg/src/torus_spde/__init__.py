"""Spectral-Galerkin / exponential-Euler solver for a bi-Laplacian SPDE on T^2."""
