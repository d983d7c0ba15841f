"""
Field containers, zero/nonzero-mode projections, and the norms used by the
energy estimates: L^p, the weighted L2 norm ||y f||, and the X norm

    ||f||_X^2 = ||f||_{L2}^2 + ||y f||_{L2}^2.

Physical fields are real (nx, ny) arrays; spectral fields use the reduced
half-spectrum layout of :mod:`pksns.grid`.  The y weight is the truncated
coordinate applied pointwise, so weighted norms are only meaningful while
fields are negligible near |y| = ly (enforced by the boundary monitor in
:mod:`pksns.diagnostics`).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .grid import Grid

PHYSICAL = "physical"
SPECTRAL = "spectral"


@dataclass
class ScalarField:
    """A scalar field in either physical or spectral representation.

    data : real (nx, ny) array when rep == "physical", complex
        (nx, ny//2 + 1) array when rep == "spectral".
    """

    data: np.ndarray
    rep: str = PHYSICAL

    def __post_init__(self):
        if self.rep not in (PHYSICAL, SPECTRAL):
            raise ValueError(f"unknown representation {self.rep!r}")
        if self.rep == PHYSICAL and np.iscomplexobj(self.data):
            raise ValueError("physical fields must be real-valued")
        if self.rep == SPECTRAL and not np.iscomplexobj(self.data):
            raise ValueError("spectral fields must be complex-valued")

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.data)))


@dataclass
class VectorField:
    """A velocity field u = (u1, u2) of physical scalar components."""

    u1: ScalarField
    u2: ScalarField


@dataclass(frozen=True)
class NormReport:
    """All norms of one field evaluated at one instant."""

    l2: float
    linf: float
    l1: float
    x_norm: float
    weighted_l2: float


def physical_data(grid: Grid, f) -> np.ndarray:
    """Coerce a ScalarField or array to a physical (nx, ny) array."""
    if isinstance(f, ScalarField):
        if f.rep == SPECTRAL:
            return grid.to_physical(f.data)
        return f.data
    f = np.asarray(f)
    if f.shape != (grid.nx, grid.ny):
        raise ValueError(
            f"field has shape {f.shape}, expected {(grid.nx, grid.ny)}"
        )
    return f


def to_spectral(grid: Grid, f: ScalarField) -> ScalarField:
    if f.rep == SPECTRAL:
        return f
    return ScalarField(grid.to_spectral(f.data), SPECTRAL)


def to_physical(grid: Grid, f: ScalarField) -> ScalarField:
    if f.rep == PHYSICAL:
        return f
    return ScalarField(grid.to_physical(f.data), PHYSICAL)


def ddx(grid: Grid, f) -> np.ndarray:
    """x derivative of a physical field, computed spectrally."""
    return grid.to_physical(grid.ddx_hat(grid.to_spectral(physical_data(grid, f))))


def ddy(grid: Grid, f) -> np.ndarray:
    """y derivative of a physical field, computed spectrally."""
    return grid.to_physical(grid.ddy_hat(grid.to_spectral(physical_data(grid, f))))


def laplacian(grid: Grid, f) -> np.ndarray:
    """Laplacian of a physical field, computed spectrally."""
    return grid.to_physical(
        grid.laplacian_hat(grid.to_spectral(physical_data(grid, f)))
    )


def dealias(grid: Grid, f: ScalarField) -> ScalarField:
    """Zero all modes outside the retained dealiasing band (idempotent)."""
    if f.rep != SPECTRAL:
        raise ValueError("dealias expects a spectral field")
    return ScalarField(grid.dealias_hat(f.data), SPECTRAL)


# -- projections -------------------------------------------------------------


def project_zero(grid: Grid, f) -> np.ndarray:
    """x average of f, broadcast back to the full grid (P0)."""
    data = physical_data(grid, f)
    return np.broadcast_to(data.mean(axis=0, keepdims=True), data.shape).copy()


def project_nonzero(grid: Grid, f) -> np.ndarray:
    """Nonzero modes f - P0 f."""
    data = physical_data(grid, f)
    return data - data.mean(axis=0, keepdims=True)


# -- norms -------------------------------------------------------------------


def norm_l2(grid: Grid, f) -> float:
    return grid.norm_l2(physical_data(grid, f))


def norm_weighted_l2(grid: Grid, f) -> float:
    """||y f||_{L2} with the pointwise coordinate weight."""
    data = physical_data(grid, f)
    return grid.norm_l2(grid.y_row * data)


def norm_x(grid: Grid, f) -> float:
    data = physical_data(grid, f)
    l2sq = np.sum(data * data) * grid.cell_area
    wsq = np.sum((grid.y_row * data) ** 2) * grid.cell_area
    return float(np.sqrt(l2sq + wsq))


def norm_lp(grid: Grid, f, p) -> float:
    """L^p norm by quadrature; p in {1, 2, 4, inf}."""
    data = physical_data(grid, f)
    if p == 1:
        return float(np.sum(np.abs(data)) * grid.cell_area)
    if p == 2:
        return grid.norm_l2(data)
    if p == 4:
        return float((np.sum(data**4) * grid.cell_area) ** 0.25)
    if p == np.inf or p == "inf":
        return float(np.max(np.abs(data)))
    raise ValueError(f"unsupported p = {p!r}; use 1, 2, 4 or inf")


def mass(grid: Grid, n) -> float:
    """Total cell mass ||n||_{L1}; warns if n has substantial negative part."""
    data = physical_data(grid, n)
    if data.size and np.min(data) < -1e-10 * max(1.0, float(np.max(np.abs(data)))):
        warnings.warn("mass() called on a field with negative values", stacklevel=2)
    return float(np.sum(np.abs(data)) * grid.cell_area)


def norm_report(grid: Grid, f) -> NormReport:
    data = physical_data(grid, f)
    l2 = grid.norm_l2(data)
    wl2 = grid.norm_l2(grid.y_row * data)
    return NormReport(
        l2=l2,
        linf=float(np.max(np.abs(data))),
        l1=float(np.sum(np.abs(data)) * grid.cell_area),
        x_norm=float(np.hypot(l2, wl2)),
        weighted_l2=wl2,
    )


def norm_x_vector(grid: Grid, u: VectorField) -> float:
    n1 = norm_x(grid, u.u1)
    n2 = norm_x(grid, u.u2)
    return float(np.hypot(n1, n2))
