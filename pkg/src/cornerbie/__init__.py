"""Corner-regularized Nystrom solvers for 2D Helmholtz scattering by PEC cylinders (TM, Neumann)."""

__version__ = "0.1.0"
