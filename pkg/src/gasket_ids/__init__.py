"""Numerical laboratory for the integrated density of states of subordinate
walks on the Sierpinski gasket with Poissonian potentials and obstacles."""

from .geometry import D_F, D_S, D_W

__all__ = ["D_F", "D_S", "D_W"]
__version__ = "0.1.0"
