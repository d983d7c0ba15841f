"""
pksns: pseudo-spectral simulator and verification suite for the 2D coupled
chemotaxis / Navier-Stokes system perturbed around a strong Poiseuille flow.
"""

from .dynamics import PhysParams, State, Terms
from .fields import ScalarField, VectorField
from .grid import Grid, GridSpec, WaveNumbers, make_grid
from .semigroup import lambda_a
from .timestepper import RunOutcome, integrate, step

__all__ = [
    "Grid",
    "GridSpec",
    "PhysParams",
    "RunOutcome",
    "ScalarField",
    "State",
    "Terms",
    "VectorField",
    "WaveNumbers",
    "integrate",
    "lambda_a",
    "make_grid",
    "step",
]

__version__ = "0.1.0"
