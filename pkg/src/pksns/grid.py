"""
Spectral discretization of the periodic channel T x [-ly, ly).

The x direction is the 2pi-periodic torus; the y direction is a periodic
truncation of the real line, wide enough that all fields of interest decay
below round-off before reaching |y| = ly.  Transforms use the real FFT over
the y axis (full complex FFT over x), with the "forward" normalization so
that the (0, 0) coefficient of a constant field equals that constant.

Spectral arrays therefore have shape (nx, ny//2 + 1): the full kx range in
FFT ordering along axis 0 and the non-negative ky range along axis 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft


@dataclass(frozen=True)
class GridSpec:
    """Resolution and geometry of the discretization.

    Parameters
    ----------
    nx : int
        Number of x modes / grid points over the 2pi-periodic torus (even, >= 4).
    ny : int
        Number of y grid points over [-ly, ly) (even, >= 4).
    ly : float
        Half-width of the truncated y domain.
    dealias_fraction : float
        Fraction of the Nyquist band retained when dealiasing quadratic
        products; the classical 2/3 rule by default.
    """

    nx: int
    ny: int
    ly: float
    dealias_fraction: float = 2.0 / 3.0

    def __post_init__(self):
        for name, n in (("nx", self.nx), ("ny", self.ny)):
            if not isinstance(n, (int, np.integer)):
                raise TypeError(f"{name} must be an integer, got {n!r}")
            if n < 4 or n % 2 != 0:
                raise ValueError(f"{name} must be even and >= 4, got {n}")
        if not self.ly > 0:
            raise ValueError(f"ly must be positive, got {self.ly}")
        if not 0.0 < self.dealias_fraction <= 1.0:
            raise ValueError(
                f"dealias_fraction must lie in (0, 1], got {self.dealias_fraction}"
            )

    @property
    def dx(self) -> float:
        return 2.0 * np.pi / self.nx

    @property
    def dy(self) -> float:
        return 2.0 * self.ly / self.ny


@dataclass(frozen=True)
class WaveNumbers:
    """Discrete wavenumber sets in FFT ordering.

    kx is integer-valued over {-nx/2+1, ..., nx/2}; ky runs over
    {-ny/2+1, ..., ny/2} scaled by pi/ly.  The Nyquist mode carries the
    positive sign.  Entries with kx = 0 identify the zero mode P0.
    """

    kx: np.ndarray
    ky: np.ndarray


def _fft_wavenumbers(n: int) -> np.ndarray:
    # FFT ordering {0, 1, ..., n/2, -n/2+1, ..., -1} with +Nyquist.
    k = np.fft.fftfreq(n, d=1.0 / n)
    k[n // 2] = n // 2
    return k


class Grid:
    """Precomputed coordinates, wavenumbers and spectral operators.

    Built via :func:`make_grid`.  All methods are pure functions of their
    array arguments; instances are immutable after construction and safe to
    share across threads.
    """

    def __init__(self, spec: GridSpec):
        self.spec = spec
        self.nx = spec.nx
        self.ny = spec.ny
        self.ly = float(spec.ly)
        self.dx = spec.dx
        self.dy = spec.dy
        self.cell_area = self.dx * self.dy

        self.x = np.arange(self.nx) * self.dx
        self.y = -self.ly + np.arange(self.ny) * self.dy

        kx = _fft_wavenumbers(self.nx)
        ky_full = _fft_wavenumbers(self.ny) * (np.pi / self.ly)
        self.wavenumbers = WaveNumbers(kx=kx, ky=ky_full)

        # Reduced spectral layout: full kx along axis 0, ky >= 0 along axis 1.
        self.nyr = self.ny // 2 + 1
        self.kx_col = kx[:, None]
        self.ky_row = (np.arange(self.nyr) * (np.pi / self.ly))[None, :]
        self.ksq = self.kx_col**2 + self.ky_row**2

        # First derivatives zero the Nyquist mode (its odd derivative is not
        # representable on the grid); even-order symbols keep the full range.
        self._kx_deriv = self.kx_col.copy()
        self._kx_deriv[self.nx // 2, 0] = 0.0
        self._ky_deriv = self.ky_row.copy()
        self._ky_deriv[0, -1] = 0.0
        self._ikx = 1j * self._kx_deriv
        self._iky = 1j * self._ky_deriv

        # Inverse elliptic symbols, precomputed for the solver hot path:
        # screened Poisson, Laplacian inverse away from (0, 0), and the same
        # restricted to kx != 0 (the nonzero-mode subspace).
        self.inv_screen = 1.0 / (self.ksq + 1.0)
        inv = np.zeros_like(self.ksq)
        nonzero = self.ksq > 0
        inv[nonzero] = 1.0 / self.ksq[nonzero]
        self.inv_ksq_all = inv
        self.inv_ksq_xnz = inv.copy()
        self.inv_ksq_xnz[0, :] = 0.0

        cut_x = spec.dealias_fraction * (self.nx / 2)
        cut_y = spec.dealias_fraction * (np.pi / self.ly) * (self.ny / 2)
        self.dealias_mask = (np.abs(self.kx_col) <= cut_x) & (
            np.abs(self.ky_row) <= cut_y
        )

        # y as a column broadcastable against (nx, ny) physical arrays.
        self.y_row = self.y[None, :]
        self.ysq_row = self.y_row**2

        self._shape_phys = (self.nx, self.ny)
        self._shape_spec = (self.nx, self.nyr)

    # -- transforms ---------------------------------------------------------

    def to_spectral(self, f: np.ndarray) -> np.ndarray:
        if f.shape != self._shape_phys:
            raise ValueError(
                f"physical field has shape {f.shape}, expected {self._shape_phys}"
            )
        return sfft.rfft2(f, norm="forward")

    def to_physical(self, fh: np.ndarray) -> np.ndarray:
        if fh.shape != self._shape_spec:
            raise ValueError(
                f"spectral field has shape {fh.shape}, expected {self._shape_spec}"
            )
        return sfft.irfft2(fh, s=self._shape_phys, norm="forward")

    # -- spectral operators -------------------------------------------------

    def ddx_hat(self, fh: np.ndarray) -> np.ndarray:
        return self._ikx * fh

    def ddy_hat(self, fh: np.ndarray) -> np.ndarray:
        return self._iky * fh

    def laplacian_hat(self, fh: np.ndarray) -> np.ndarray:
        return -self.ksq * fh

    def dealias_hat(self, fh: np.ndarray) -> np.ndarray:
        return fh * self.dealias_mask

    def project_zero_hat(self, fh: np.ndarray) -> np.ndarray:
        out = np.zeros_like(fh)
        out[0, :] = fh[0, :]
        return out

    def project_nonzero_hat(self, fh: np.ndarray) -> np.ndarray:
        out = fh.copy()
        out[0, :] = 0.0
        return out

    # -- quadrature ---------------------------------------------------------

    def integrate(self, f: np.ndarray) -> float:
        """Uniform-grid quadrature of a physical field over the domain."""
        return float(np.sum(f)) * self.cell_area

    def norm_l2(self, f: np.ndarray) -> float:
        return float(np.sqrt(np.sum(f * f) * self.cell_area))

    def spectral_norm_l2(self, fh: np.ndarray) -> float:
        """L2 norm evaluated from reduced spectral coefficients (Parseval)."""
        w = np.full(self.nyr, 2.0)
        w[0] = 1.0
        w[-1] = 1.0
        total = np.sum((fh.real**2 + fh.imag**2) * w[None, :])
        return float(np.sqrt(total * 2.0 * np.pi * 2.0 * self.ly))


def make_grid(spec: GridSpec) -> Grid:
    """Build the grid with coordinates and wavenumbers for a GridSpec."""
    return Grid(spec)
