"""
Inverse operators: the screened Poisson solve for the chemoattractant,
the Laplacian inverse on nonzero modes, the (d_yy)^{-1} inverse on the zero
mode, and Biot-Savart reconstruction of the velocity from the vorticity.

All solves are exact diagonal divisions in spectral space; none is
iterative.  On the periodic y interval, (d_yy)^{-1} is defined on zero-mean
data only: the solvers subtract the offending mean and report it rather
than regularizing silently.
"""

from __future__ import annotations

import warnings

import numpy as np

from .fields import PHYSICAL, ScalarField, VectorField, physical_data
from .grid import Grid

#: relative zero-mode content above which the nonzero-mode inverse refuses.
ZERO_MODE_TOL = 1e-12


class ZeroModeError(ValueError):
    """Input carries zero-mode content where only nonzero modes are valid."""


# -- array-level kernels (used by the dynamics hot path) ---------------------


def screened_poisson_hat(grid: Grid, n_hat: np.ndarray) -> np.ndarray:
    """Solve -Lap(c) + c = n: divide by the symbol kx^2 + ky^2 + 1 >= 1."""
    return n_hat * grid.inv_screen


def inverse_laplacian_nonzero_hat(grid: Grid, f_hat: np.ndarray) -> np.ndarray:
    """Apply Lap^{-1} on modes with kx != 0 (symbol magnitude >= 1 there)."""
    return f_hat * (-grid.inv_ksq_xnz)


def streamfunction_hat(grid: Grid, w_hat: np.ndarray):
    """Lap^{-1} of the vorticity with the zero-mode kernel handled in y.

    Returns (psi_hat, removed_mean): the (0, 0) coefficient (the y mean of
    the x-averaged vorticity) lies in the kernel of d_yy on the torus and is
    removed before inversion; its value is reported.
    """
    return w_hat * (-grid.inv_ksq_all), w_hat[0, 0]


def velocity_hat(grid: Grid, w_hat: np.ndarray):
    """Biot-Savart u = (-d_y psi, d_x psi) in spectral space."""
    psi, removed_mean = streamfunction_hat(grid, w_hat)
    u1_hat = -grid.ddy_hat(psi)
    u2_hat = grid.ddx_hat(psi)
    return u1_hat, u2_hat, removed_mean


# -- field-level operations ---------------------------------------------------


def solve_screened_poisson(grid: Grid, n) -> ScalarField:
    """Chemoattractant c from -Lap(c) + c = n.

    The solve is exact in spectral arithmetic.  Negative excursions of c for
    nonnegative n (possible on the discrete grid against the continuum
    maximum principle) raise a warning, not an error.
    """
    n_data = physical_data(grid, n)
    if not np.all(np.isfinite(n_data)):
        raise ValueError("screened Poisson input contains NaN/Inf")
    c = grid.to_physical(screened_poisson_hat(grid, grid.to_spectral(n_data)))
    if np.min(n_data) >= 0 and np.min(c) < -1e-10 * max(1.0, float(np.max(c, initial=0.0))):
        warnings.warn(
            "screened Poisson produced negative c for nonnegative n "
            "(discrete maximum-principle violation)",
            stacklevel=2,
        )
    return ScalarField(c, PHYSICAL)


def inverse_laplacian_nonzero(grid: Grid, f) -> ScalarField:
    """Lap^{-1} f for x-mean-free f; rejects zero-mode contamination."""
    f_data = physical_data(grid, f)
    f_hat = grid.to_spectral(f_data)
    norm = grid.spectral_norm_l2(f_hat)
    zero_part = grid.spectral_norm_l2(grid.project_zero_hat(f_hat))
    if zero_part > ZERO_MODE_TOL * max(norm, 1e-300):
        raise ZeroModeError(
            f"inverse_laplacian_nonzero: zero-mode content {zero_part:.3e} "
            f"exceeds {ZERO_MODE_TOL:.0e} x ||f||"
        )
    return ScalarField(
        grid.to_physical(inverse_laplacian_nonzero_hat(grid, f_hat)), PHYSICAL
    )


def inverse_dyy_zero(grid: Grid, f):
    """(d_yy)^{-1} on an x-independent field.

    Returns (ScalarField, removed_mean).  The y mean is the kernel
    obstruction on the periodic interval; it is subtracted before inversion
    and reported (diagnostics must surface it).
    """
    f_data = physical_data(grid, f)
    f_hat = grid.to_spectral(f_data)
    nonzero_x = grid.spectral_norm_l2(grid.project_nonzero_hat(f_hat))
    total = grid.spectral_norm_l2(f_hat)
    if nonzero_x > 1e-10 * max(total, 1e-300):
        raise ZeroModeError("inverse_dyy_zero expects an x-independent field")
    removed_mean = float(f_hat[0, 0].real)
    out = np.zeros_like(f_hat)
    out[0, 1:] = f_hat[0, 1:] / (-grid.ky_row[0, 1:] ** 2)
    return ScalarField(grid.to_physical(out), PHYSICAL), removed_mean


def biot_savart(grid: Grid, omega):
    """Velocity u = grad^perp Lap^{-1} omega.

    The zero x-mode goes through (d_yy)^{-1}: u0 = (-d_y (d_yy)^{-1} w0, 0).
    Returns (VectorField, removed_mean) where removed_mean is the y mean of
    the x-averaged vorticity discarded by the kernel handling.
    """
    w_data = physical_data(grid, omega)
    if not np.all(np.isfinite(w_data)):
        raise ValueError("biot_savart input contains NaN/Inf")
    u1_hat, u2_hat, removed_mean = velocity_hat(grid, grid.to_spectral(w_data))
    u = VectorField(
        ScalarField(grid.to_physical(u1_hat), PHYSICAL),
        ScalarField(grid.to_physical(u2_hat), PHYSICAL),
    )
    return u, float(removed_mean.real)
