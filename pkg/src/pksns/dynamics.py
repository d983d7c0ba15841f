"""
Right-hand side of the rescaled cell-density/vorticity system around the
strong Poiseuille shear, in the time units where the shear advection has
unit amplitude:

    dn/dt = (1/A) Lap(n) - y^2 dx(n) - (1/A) div(n grad c) - (1/A) div(u n)
    dw/dt = (1/A) Lap(w) - y^2 dx(w) + 2 dx(Lap^{-1} w)
            - (1/A) div(u w) + (1/A) dx(n)

with -Lap(c) + c = n and u = grad^perp Lap^{-1} w.  The transport terms are
assembled in conservative (divergence) form so the discrete mass integral
of dn/dt vanishes identically; y^2 is applied pointwise in physical space.

A second, independently assembled right-hand side splits every unknown into
its x-averaged part and the remainder and builds the two coupled subsystems
term by term; it exists as an oracle for the full assembly and as the
source of the bootstrap monitor's term-wise magnitudes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import elliptic
from .fields import PHYSICAL, ScalarField, VectorField
from .grid import Grid


class BlowUpSignal(RuntimeError):
    """Raised when the solution leaves the finite/resolved regime."""

    def __init__(self, t: float, linf_n: float, reason: str):
        super().__init__(f"blow-up signalled at t={t:.6g}: {reason}")
        self.t = t
        self.linf_n = linf_n
        self.reason = reason


@dataclass(frozen=True)
class PhysParams:
    """Physical and run parameters of the rescaled system.

    a : shear amplitude A (> 0; the enhanced-dissipation rate formula
        additionally needs a > e).
    horizon : integration end time in rescaled units.
    eps0 : semigroup rate constant (>= 1/10).
    c0_semigroup : semigroup prefactor, in (1, 10).
    linf_cap : blow-up declaration threshold for max |n|.
    dt_min : step size below which integration halts as collapsed.
    cfl : Courant factor for the explicit terms.
    """

    a: float
    horizon: float
    eps0: float = 0.1
    c0_semigroup: float = 5.0
    linf_cap: float = math.inf
    dt_min: float = 1e-9
    cfl: float = 0.4

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError(f"amplitude a must be positive, got {self.a}")
        if not self.horizon > 0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if self.eps0 < 0.1:
            raise ValueError(f"eps0 must be >= 1/10, got {self.eps0}")
        if not 1.0 < self.c0_semigroup < 10.0:
            raise ValueError(
                f"c0_semigroup must lie in (1, 10), got {self.c0_semigroup}"
            )
        if not self.linf_cap > 0:
            raise ValueError("linf_cap must be positive")
        if not self.dt_min > 0:
            raise ValueError("dt_min must be positive")
        if not 0 < self.cfl <= 1:
            raise ValueError(f"cfl must lie in (0, 1], got {self.cfl}")

    def lambda_a(self) -> float:
        """Enhanced-dissipation rate 1/(A^{1/2} log A); requires a > e."""
        if self.a <= math.e:
            raise ValueError(f"lambda_A requires a > e, got a = {self.a}")
        return 1.0 / (math.sqrt(self.a) * math.log(self.a))

    def physical_time(self, t: float) -> float:
        """Convert rescaled time to the unrescaled (pre-scaling) time t / A.

        The unrescaled formulation differs from the integrated one only by
        this time scaling; it is provided as a unit conversion, not as a
        second solver.
        """
        return t / self.a


@dataclass(frozen=True)
class Terms:
    """Switches for the individual right-hand-side terms.

    Defaults give the full coupled system.  `vorticity=False` freezes the
    fluid (w ignored, u = 0): the classical chemotaxis system, used by the
    flow-off arm of the blow-up scenario.  `diffusion=False` drops the
    (1/A) Laplacian (pure transport tests).
    """

    diffusion: bool = True
    shear: bool = True
    chemotaxis: bool = True
    transport: bool = True
    vorticity: bool = True


FULL = Terms()


def _shear_hat(grid: Grid, f_hat: np.ndarray) -> np.ndarray:
    """-y^2 dx(f): spectral x derivative, pointwise y^2 multiply."""
    dxf = grid.to_physical(grid.ddx_hat(f_hat))
    return grid.to_spectral(grid.ysq_row * dxf)


def explicit_rhs_hat(grid: Grid, params: PhysParams, n_hat, w_hat, terms: Terms = FULL):
    """Non-diffusive tendencies (dn_hat, dw_hat): everything except (1/A) Lap.

    This is the part the time stepper advances explicitly under the exact
    diffusion integrating factor.  The chemotaxis flux is assembled in
    conservative form div(n grad c); the velocity transport in advective
    form u . grad(f), which shares the derivative transforms with the shear
    term (div u = 0 holds exactly in spectral arithmetic, so the advective
    form conserves the discrete mass integral identically too).  Quadratic
    products are dealiased after multiplication; the pointwise linear shear
    multiplication is not.
    """
    inv_a = 1.0 / params.a
    dn = np.zeros_like(n_hat)
    dw = np.zeros_like(w_hat)
    transport = terms.vorticity and terms.transport

    dxn = grid.to_physical(grid.ddx_hat(n_hat)) if (terms.shear or transport) else None
    dxw = (
        grid.to_physical(grid.ddx_hat(w_hat))
        if terms.vorticity and (terms.shear or transport)
        else None
    )

    if transport:
        psi_hat = -grid.inv_ksq_all * w_hat
        u1 = grid.to_physical(-grid.ddy_hat(psi_hat))
        u2 = grid.to_physical(grid.ddx_hat(psi_hat))
        dyn = grid.to_physical(grid.ddy_hat(n_hat))
        dyw = grid.to_physical(grid.ddy_hat(w_hat))
        adv = u1 * dxn
        adv += u2 * dyn
        dn -= inv_a * grid.dealias_hat(grid.to_spectral(adv))
        adv = u1 * dxw
        adv += u2 * dyw
        dw -= inv_a * grid.dealias_hat(grid.to_spectral(adv))

    if terms.shear:
        dn -= grid.to_spectral(grid.ysq_row * dxn)
        if terms.vorticity:
            dw -= grid.to_spectral(grid.ysq_row * dxw)

    if terms.chemotaxis:
        c_hat = n_hat * grid.inv_screen
        n_phys = grid.to_physical(n_hat)
        dxc = grid.to_physical(grid.ddx_hat(c_hat))
        dyc = grid.to_physical(grid.ddy_hat(c_hat))
        fx = grid.dealias_hat(grid.to_spectral(n_phys * dxc))
        fy = grid.dealias_hat(grid.to_spectral(n_phys * dyc))
        dn -= inv_a * (grid.ddx_hat(fx) + grid.ddy_hat(fy))

    if terms.vorticity:
        # 2 dx(Lap^{-1} w): only kx != 0 modes contribute.
        if not transport:
            psi_hat = -grid.inv_ksq_all * w_hat
        dw += 2.0 * grid.ddx_hat(psi_hat)
        dw += inv_a * grid.ddx_hat(n_hat)

    return dn, dw


def diffusion_hat(grid: Grid, params: PhysParams, f_hat: np.ndarray) -> np.ndarray:
    return grid.laplacian_hat(f_hat) / params.a


class State:
    """Prognostic pair (n, w) at one instant, with cached derived fields.

    The authoritative data are the spectral coefficients; physical views,
    the chemoattractant and the velocity are computed on first access and
    cached.  States are treated as immutable snapshots: stepping produces a
    new State.
    """

    __slots__ = ("grid", "t", "n_hat", "w_hat", "_cache")

    def __init__(self, grid: Grid, n_hat: np.ndarray, w_hat: np.ndarray, t: float = 0.0):
        self.grid = grid
        self.t = float(t)
        self.n_hat = n_hat
        self.w_hat = w_hat
        self._cache = {}

    @classmethod
    def from_fields(cls, grid: Grid, n, omega, t: float = 0.0) -> "State":
        n_data = n.data if isinstance(n, ScalarField) else np.asarray(n, dtype=float)
        w_data = (
            omega.data if isinstance(omega, ScalarField) else np.asarray(omega, dtype=float)
        )
        return cls(grid, grid.to_spectral(n_data), grid.to_spectral(w_data), t)

    def _get(self, key, builder):
        if key not in self._cache:
            self._cache[key] = builder()
        return self._cache[key]

    @property
    def n(self) -> ScalarField:
        return self._get(
            "n", lambda: ScalarField(self.grid.to_physical(self.n_hat), PHYSICAL)
        )

    @property
    def omega(self) -> ScalarField:
        return self._get(
            "w", lambda: ScalarField(self.grid.to_physical(self.w_hat), PHYSICAL)
        )

    @property
    def c(self) -> ScalarField:
        def build():
            c_hat = elliptic.screened_poisson_hat(self.grid, self.n_hat)
            return ScalarField(self.grid.to_physical(c_hat), PHYSICAL)

        return self._get("c", build)

    @property
    def u(self) -> VectorField:
        def build():
            u1_hat, u2_hat, _ = elliptic.velocity_hat(self.grid, self.w_hat)
            return VectorField(
                ScalarField(self.grid.to_physical(u1_hat), PHYSICAL),
                ScalarField(self.grid.to_physical(u2_hat), PHYSICAL),
            )

        return self._get("u", build)

    def is_finite(self) -> bool:
        return bool(
            np.all(np.isfinite(self.n_hat)) and np.all(np.isfinite(self.w_hat))
        )

    def mass(self) -> float:
        """Total cell mass as the signed integral of n.

        The signed integral is the discretely conserved quantity; it equals
        the L1 norm for admissible nonnegative densities but is insensitive
        to round-off-level negative ripples.
        """
        return float(np.sum(self.n.data)) * self.grid.cell_area

    def linf_n(self) -> float:
        return float(np.max(np.abs(self.n.data)))


def derived_fields(grid: Grid, n, omega):
    """Chemoattractant and velocity (c, u) for given (n, w)."""
    c = elliptic.solve_screened_poisson(grid, n)
    u, _ = elliptic.biot_savart(grid, omega)
    return c, u


def rhs(state: State, params: PhysParams, terms: Terms = FULL):
    """Full tendencies (dn/dt, dw/dt) as physical fields."""
    dn_hat, dw_hat = explicit_rhs_hat(state.grid, params, state.n_hat, state.w_hat, terms)
    if terms.diffusion:
        dn_hat = dn_hat + diffusion_hat(state.grid, params, state.n_hat)
        dw_hat = dw_hat + diffusion_hat(state.grid, params, state.w_hat)
    dn = state.grid.to_physical(dn_hat)
    dw = state.grid.to_physical(dw_hat)
    if not (np.all(np.isfinite(dn)) and np.all(np.isfinite(dw))):
        raise BlowUpSignal(state.t, state.linf_n(), "NaN/Inf in right-hand side")
    return ScalarField(dn, PHYSICAL), ScalarField(dw, PHYSICAL)


# -- mode-decomposed assembly (oracle) ----------------------------------------


def _div_hat(grid: Grid, fx_phys, fy_phys):
    """Dealiased spectral divergence of a physical flux (fx, fy)."""
    fx = grid.dealias_hat(grid.to_spectral(fx_phys))
    fy = grid.dealias_hat(grid.to_spectral(fy_phys))
    return grid.ddx_hat(fx) + grid.ddy_hat(fy)


def _dy_hat(grid: Grid, f_phys):
    return grid.ddy_hat(grid.dealias_hat(grid.to_spectral(f_phys)))


def rhs_mode_decomposed(state: State, params: PhysParams, terms: Terms = FULL):
    """The two coupled subsystems for (n0, w0) and (n_neq, w_neq).

    Returns physical ScalarFields (dn0, dn_neq, dw0, dw_neq) assembled
    independently of :func:`rhs`, term by term from the projected unknowns;
    their sums must reproduce the full tendencies.  All products receive
    the same dealiasing treatment as the full assembly; the transport terms
    use the same advective form (the x average of u_neq . grad f_neq is the
    advective counterpart of the flux form dy (u2_neq f_neq)_0, the two
    being identical in the continuum since div u = 0).
    """
    grid = state.grid
    inv_a = 1.0 / params.a

    n_hat0 = grid.project_zero_hat(state.n_hat)
    n_hatq = grid.project_nonzero_hat(state.n_hat)
    w_hat0 = grid.project_zero_hat(state.w_hat)
    w_hatq = grid.project_nonzero_hat(state.w_hat)

    n0 = grid.to_physical(n_hat0)
    nq = grid.to_physical(n_hatq)

    c_hat0 = elliptic.screened_poisson_hat(grid, n_hat0)
    c_hatq = elliptic.screened_poisson_hat(grid, n_hatq)
    dyc0 = grid.to_physical(grid.ddy_hat(c_hat0))
    dxcq = grid.to_physical(grid.ddx_hat(c_hatq))
    dycq = grid.to_physical(grid.ddy_hat(c_hatq))

    dn0_hat = np.zeros_like(state.n_hat)
    dnq_hat = np.zeros_like(state.n_hat)
    dw0_hat = np.zeros_like(state.w_hat)
    dwq_hat = np.zeros_like(state.w_hat)

    if terms.diffusion:
        dn0_hat += inv_a * grid.laplacian_hat(n_hat0)
        dnq_hat += inv_a * grid.laplacian_hat(n_hatq)
        if terms.vorticity:
            dw0_hat += inv_a * grid.laplacian_hat(w_hat0)
            dwq_hat += inv_a * grid.laplacian_hat(w_hatq)

    if terms.shear:
        dnq_hat -= _shear_hat(grid, n_hatq)
        if terms.vorticity:
            dwq_hat -= _shear_hat(grid, w_hatq)

    if terms.chemotaxis:
        # zero-mode equation: dy of the x average of the y fluxes
        dn0_hat -= inv_a * grid.project_zero_hat(_dy_hat(grid, nq * dycq))
        dn0_hat -= inv_a * _dy_hat(grid, n0 * dyc0)
        # nonzero-mode equation
        dnq_hat -= inv_a * grid.project_nonzero_hat(_div_hat(grid, nq * dxcq, nq * dycq))
        dnq_hat -= inv_a * _div_hat(grid, n0 * dxcq, n0 * dycq)
        dnq_hat -= inv_a * _dy_hat(grid, nq * dyc0)

    if terms.vorticity:
        if terms.transport:
            # u0 = (-dy (dyy)^{-1} w0, 0); u_neq = grad^perp Lap^{-1} w_neq
            u1_hat0, _, _ = elliptic.velocity_hat(grid, w_hat0)
            u1_hatq, u2_hatq, _ = elliptic.velocity_hat(grid, w_hatq)
            u10 = grid.to_physical(u1_hat0)
            u1q = grid.to_physical(u1_hatq)
            u2q = grid.to_physical(u2_hatq)
            dxnq = grid.to_physical(grid.ddx_hat(n_hatq))
            dynq = grid.to_physical(grid.ddy_hat(n_hatq))
            dyn0 = grid.to_physical(grid.ddy_hat(n_hat0))
            dxwq = grid.to_physical(grid.ddx_hat(w_hatq))
            dywq = grid.to_physical(grid.ddy_hat(w_hatq))
            dyw0 = grid.to_physical(grid.ddy_hat(w_hat0))

            def product_hat(f):
                return grid.dealias_hat(grid.to_spectral(f))

            mixed_n = product_hat(u1q * dxnq + u2q * dynq)
            dn0_hat -= inv_a * grid.project_zero_hat(mixed_n)
            dnq_hat -= inv_a * grid.project_nonzero_hat(mixed_n)
            dnq_hat -= inv_a * product_hat(u10 * dxnq)
            dnq_hat -= inv_a * product_hat(u2q * dyn0)

            mixed_w = product_hat(u1q * dxwq + u2q * dywq)
            dw0_hat -= inv_a * grid.project_zero_hat(mixed_w)
            dwq_hat -= inv_a * grid.project_nonzero_hat(mixed_w)
            dwq_hat -= inv_a * product_hat(u10 * dxwq)
            dwq_hat -= inv_a * product_hat(u2q * dyw0)

        psi_hatq, _ = elliptic.streamfunction_hat(grid, w_hatq)
        dwq_hat += 2.0 * grid.ddx_hat(psi_hatq)
        dwq_hat += inv_a * grid.ddx_hat(n_hatq)

    return (
        ScalarField(grid.to_physical(dn0_hat), PHYSICAL),
        ScalarField(grid.to_physical(dnq_hat), PHYSICAL),
        ScalarField(grid.to_physical(dw0_hat), PHYSICAL),
        ScalarField(grid.to_physical(dwq_hat), PHYSICAL),
    )


def zero_mode_velocity_residual(prev: State, curr: State, params: PhysParams) -> float:
    """L2 residual of the x-averaged horizontal momentum balance.

    Uses a first-order finite difference in time between two consecutive
    states and evaluates the spatial terms on the newer one; the result is
    O(dt) plus spectral truncation.
    """
    grid = curr.grid
    dt = curr.t - prev.t
    if dt <= 0:
        raise ValueError("states must be consecutive in time")

    def u1_zero_hat(state: State) -> np.ndarray:
        u1_hat, _, _ = elliptic.velocity_hat(grid, grid.project_zero_hat(state.w_hat))
        return u1_hat

    u1p = u1_zero_hat(prev)
    u1c = u1_zero_hat(curr)
    dt_u1 = (u1c - u1p) / dt

    u1_hatq, u2_hatq, _ = elliptic.velocity_hat(grid, grid.project_nonzero_hat(curr.w_hat))
    prod = grid.to_physical(u1_hatq) * grid.to_physical(u2_hatq)
    forcing = grid.project_zero_hat(grid.ddy_hat(grid.to_spectral(prod)))

    res_hat = dt_u1 - grid.laplacian_hat(u1c) / params.a + forcing / params.a
    return grid.norm_l2(grid.to_physical(res_hat))


def shifted(state: State, shift: int) -> State:
    """x-translation of a state by an integer number of grid cells."""
    grid = state.grid
    phase = np.exp(-1j * grid.kx_col * (shift * grid.dx))
    return State(grid, state.n_hat * phase, state.w_hat * phase, state.t)


def apply_linear_operator(
    grid: Grid,
    a: float,
    f_hat: np.ndarray,
    nonlocal_term: bool,
    diffusion: bool = True,
) -> np.ndarray:
    """Apply (1/A) Lap - y^2 dx (+ 2 dx Lap^{-1}) to a spectral field.

    With `nonlocal_term` this is the linearized vorticity operator; without
    it, the plain shear-diffusion operator.  Matches the w tendency of
    :func:`rhs` with n = 0 and transport off, to round-off.
    """
    out = -_shear_hat(grid, f_hat)
    if diffusion:
        out += grid.laplacian_hat(f_hat) / a
    if nonlocal_term:
        psi_hat, _ = elliptic.streamfunction_hat(grid, f_hat)
        out += 2.0 * grid.ddx_hat(psi_hat)
    return out


def make_terms(**kwargs) -> Terms:
    return replace(FULL, **kwargs)
