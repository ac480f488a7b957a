"""Axisymmetric swirl dynamics: the Gamma = r v^theta drift-diffusion solver,
an axisymmetric Navier-Stokes solver, scale-invariant drift norms, regularity
estimate checks and blow-up rescaling diagnostics.
"""

__version__ = "0.1.0"
