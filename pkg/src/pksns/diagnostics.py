"""
Runtime verification: the six bootstrap inequalities, the elliptic and
commutator lemma constants, the anisotropic Sobolev ratio, and the
mass/boundary monitors that certify the periodic y truncation.

The bootstrap envelopes are evaluated with the worst-case admissible
semigroup constants C0 = 10 and eps0 = 1/10 and the rate
lambda_A = A^{-1/2}/log A, so pass/fail is well defined.  The sup-norm
reference constant is instantiated empirically as max(1, max|n_in|); the
monitor additionally reports the raw growth factor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import elliptic
from .dynamics import PhysParams, State
from .fields import physical_data
from .grid import Grid

#: worst-case admissible envelope constants
C0_WORST = 10.0
EPS0_WORST = 0.1

#: |y| > BOUNDARY_STRIP * ly counts as the boundary strip
BOUNDARY_STRIP = 0.9

#: runs whose boundary mass fraction exceeds this are flagged invalid for
#: weighted-norm claims
BOUNDARY_FLAG_THRESHOLD = 1e-8

BOOTSTRAP_NAMES = ("A1", "A2", "A3", "A4", "A5", "A6")


# -- norm helpers -------------------------------------------------------------


def _x_norm_sq(grid: Grid, f: np.ndarray) -> float:
    return float(
        (np.sum(f * f) + np.sum((grid.y_row * f) ** 2)) * grid.cell_area
    )


def _grad_x_norm_sq(grid: Grid, f_hat: np.ndarray) -> float:
    gx = grid.to_physical(grid.ddx_hat(f_hat))
    gy = grid.to_physical(grid.ddy_hat(f_hat))
    return _x_norm_sq(grid, gx) + _x_norm_sq(grid, gy)


# -- bootstrap monitor ---------------------------------------------------------


@dataclass(frozen=True)
class BootstrapRefs:
    """Reference constants frozen at t = 0."""

    x_norm_n_neq_in: float
    x_norm_dxn_neq_in: float
    x_norm_w_neq_in: float
    c_inf: float
    a: float
    lambda_a: float
    a_threshold: float  # A^{-3/4}
    c0: float = C0_WORST
    eps0: float = EPS0_WORST


@dataclass
class BootstrapRecord:
    """One inequality: both sides at every diagnostic time."""

    name: str
    t: list = field(default_factory=list)
    lhs: list = field(default_factory=list)
    rhs: list = field(default_factory=list)

    def append(self, t: float, lhs: float, rhs: float):
        self.t.append(t)
        self.lhs.append(lhs)
        self.rhs.append(rhs)

    @property
    def satisfied(self) -> bool:
        return all(l <= r for l, r in zip(self.lhs, self.rhs))

    @property
    def worst_ratio(self) -> float:
        if not self.lhs:
            return 0.0
        return max(
            (l / r if r > 0 else (0.0 if l == 0 else math.inf))
            for l, r in zip(self.lhs, self.rhs)
        )


@dataclass
class BootstrapReport:
    refs: BootstrapRefs
    records: dict
    sup_growth_factor: float = 0.0
    dxn_projection_residual: float = 0.0

    @property
    def all_satisfied(self) -> bool:
        return all(rec.satisfied for rec in self.records.values())

    def as_dict(self) -> dict:
        return {
            "refs": {
                "x_norm_n_neq_in": self.refs.x_norm_n_neq_in,
                "x_norm_dxn_neq_in": self.refs.x_norm_dxn_neq_in,
                "x_norm_w_neq_in": self.refs.x_norm_w_neq_in,
                "c_inf": self.refs.c_inf,
                "a": self.refs.a,
                "lambda_a": self.refs.lambda_a,
                "a_threshold": self.refs.a_threshold,
                "c0": self.refs.c0,
                "eps0": self.refs.eps0,
            },
            "sup_growth_factor": self.sup_growth_factor,
            "dxn_projection_residual": self.dxn_projection_residual,
            "records": {
                name: {
                    "t": rec.t,
                    "lhs": rec.lhs,
                    "rhs": rec.rhs,
                    "satisfied": rec.satisfied,
                    "worst_ratio": rec.worst_ratio,
                }
                for name, rec in self.records.items()
            },
        }


class BootstrapMonitor:
    """Appends the six inequality evaluations at every diagnostic time.

    Cumulative time integrals advance by the trapezoid rule at the
    diagnostic cadence.  The monitor never mutates the solution.
    """

    def __init__(self, initial: State, params: PhysParams):
        grid = initial.grid
        nq_hat = grid.project_nonzero_hat(initial.n_hat)
        wq_hat = grid.project_nonzero_hat(initial.w_hat)
        dxn_hat = grid.ddx_hat(initial.n_hat)
        linf_in = initial.linf_n()
        self.grid = grid
        self.params = params
        self.refs = BootstrapRefs(
            x_norm_n_neq_in=math.sqrt(_x_norm_sq(grid, grid.to_physical(nq_hat))),
            x_norm_dxn_neq_in=math.sqrt(_x_norm_sq(grid, grid.to_physical(dxn_hat))),
            x_norm_w_neq_in=math.sqrt(_x_norm_sq(grid, grid.to_physical(wq_hat))),
            c_inf=max(1.0, linf_in),
            a=params.a,
            lambda_a=params.lambda_a(),
            a_threshold=params.a ** (-0.75),
        )
        self.records = {name: BootstrapRecord(name) for name in BOOTSTRAP_NAMES}
        self._t_prev = None
        self._grad_n_prev = 0.0
        self._grad_w_prev = 0.0
        self.cum_grad_n = 0.0
        self.cum_grad_w = 0.0
        self.sup_linf = 0.0
        # consistency of dx n = dx n_neq (x derivatives kill zero modes)
        self.dxn_projection_residual = 0.0

    def update(self, state: State):
        grid = self.grid
        refs = self.refs
        t = state.t

        nq_hat = grid.project_nonzero_hat(state.n_hat)
        wq_hat = grid.project_nonzero_hat(state.w_hat)
        grad_n = _grad_x_norm_sq(grid, nq_hat)
        grad_w = _grad_x_norm_sq(grid, wq_hat)
        if self._t_prev is not None:
            h = t - self._t_prev
            self.cum_grad_n += 0.5 * h * (self._grad_n_prev + grad_n)
            self.cum_grad_w += 0.5 * h * (self._grad_w_prev + grad_w)
        self._t_prev = t
        self._grad_n_prev = grad_n
        self._grad_w_prev = grad_w

        x_nq = math.sqrt(_x_norm_sq(grid, grid.to_physical(nq_hat)))
        x_wq = math.sqrt(_x_norm_sq(grid, grid.to_physical(wq_hat)))
        dxn = grid.to_physical(grid.ddx_hat(state.n_hat))
        x_dxn_sq = _x_norm_sq(grid, dxn)
        # the monitored quantity uses dx of the full n; its identity with
        # dx of the nonzero modes is asserted as a consistency residual
        dxn_neq = grid.to_physical(grid.ddx_hat(nq_hat))
        self.dxn_projection_residual = max(
            self.dxn_projection_residual, float(np.max(np.abs(dxn - dxn_neq)))
        )
        linf = state.linf_n()
        self.sup_linf = max(self.sup_linf, linf)

        decay = math.exp(-refs.eps0 * refs.lambda_a * t)
        inv_a = 1.0 / refs.a

        self.records["A1"].append(t, inv_a * self.cum_grad_n, 4.0 * refs.x_norm_n_neq_in**2)
        self.records["A2"].append(t, x_nq, 4.0 * refs.c0 * decay * refs.x_norm_n_neq_in)
        self.records["A3"].append(t, x_dxn_sq, 4.0 * refs.x_norm_dxn_neq_in**2)
        self.records["A4"].append(t, self.sup_linf, 4.0 * refs.c_inf)
        self.records["A5"].append(
            t, inv_a * self.cum_grad_w, 4.0 * (refs.x_norm_w_neq_in**2 + refs.a_threshold)
        )
        self.records["A6"].append(
            t, x_wq, 4.0 * refs.c0 * decay * (refs.x_norm_w_neq_in + refs.a_threshold)
        )

    def report(self) -> BootstrapReport:
        return BootstrapReport(
            refs=self.refs,
            records=self.records,
            sup_growth_factor=self.sup_linf / self.refs.c_inf,
            dxn_projection_residual=self.dxn_projection_residual,
        )


# -- lemma-constant verifications ---------------------------------------------


@dataclass(frozen=True)
class IneqMargin:
    """A verified inequality lhs <= rhs with margin = rhs - lhs."""

    name: str
    lhs: float
    rhs: float

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs


def verify_elliptic_zero_mode(grid: Grid, n0) -> list:
    """Energy chains of the x-averaged screened Poisson solve.

    Unweighted: ||dyy c0||^2 + ||dy c0||^2 + ||c0||^2 <= 2 ||n0||^2 (exact
    in spectral arithmetic).  Weighted chains carry the coordinate weight
    and hold up to exponentially small boundary terms of the truncation.
    """
    data = physical_data(grid, n0)
    c0_hat = elliptic.screened_poisson_hat(grid, grid.to_spectral(data))
    c0 = grid.to_physical(c0_hat)
    dyc0 = grid.to_physical(grid.ddy_hat(c0_hat))
    dyyc0 = grid.to_physical(grid.ddy_hat(grid.ddy_hat(c0_hat)))

    sq = lambda f: float(np.sum(f * f) * grid.cell_area)
    y = grid.y_row
    n0sq = sq(data)
    return [
        IneqMargin("c0_energy", 2 * sq(dyc0) + sq(c0), n0sq),
        IneqMargin("c0_chain", sq(dyyc0) + sq(dyc0) + sq(c0), 2 * n0sq),
        IneqMargin(
            "c0_weighted_first", 2 * sq(y * dyc0) + sq(y * c0), 2 * sq(c0) + sq(y * data)
        ),
        IneqMargin(
            "c0_weighted_second",
            sq(y * dyyc0) + 2 * sq(y * dyc0),
            2 * sq(c0) + sq(y * data),
        ),
    ]


def verify_elliptic_nonzero_mode(grid: Grid, nq) -> list:
    """Same chains for the x-dependent part of the solve."""
    data = physical_data(grid, nq)
    nq_hat = grid.project_nonzero_hat(grid.to_spectral(data))
    data = grid.to_physical(nq_hat)
    c_hat = elliptic.screened_poisson_hat(grid, nq_hat)
    c = grid.to_physical(c_hat)
    dxc = grid.to_physical(grid.ddx_hat(c_hat))
    dyc = grid.to_physical(grid.ddy_hat(c_hat))
    lap = grid.to_physical(grid.laplacian_hat(c_hat))

    sq = lambda f: float(np.sum(f * f) * grid.cell_area)
    y = grid.y_row
    nsq = sq(data)
    grad_sq = sq(dxc) + sq(dyc)
    wgrad_sq = sq(y * dxc) + sq(y * dyc)
    return [
        IneqMargin("cq_energy", 2 * grad_sq + sq(c), nsq),
        IneqMargin("cq_chain", sq(lap) + grad_sq + sq(c), 2 * nsq),
        IneqMargin("cq_weighted_first", 2 * wgrad_sq + sq(y * c), 2 * sq(c) + sq(y * data)),
        IneqMargin(
            "cq_weighted_second", sq(y * lap) + 2 * wgrad_sq, 2 * sq(c) + sq(y * data)
        ),
    ]


def verify_commutator(grid: Grid, omega_neq) -> list:
    """Weighted velocity bounds from the vorticity (commutator estimates):

        ||y u||    <= 3 ||w|| + ||y w||
        ||y dy u|| <= 4 ||w|| + ||y w||
        ||y dx u|| <= 3 ||w|| + ||y w||

    for u = grad^perp Lap^{-1} w on x-mean-free w.
    """
    data = physical_data(grid, omega_neq)
    w_hat = grid.to_spectral(data)
    zero_part = grid.spectral_norm_l2(grid.project_zero_hat(w_hat))
    total = grid.spectral_norm_l2(w_hat)
    if total > 0 and zero_part > 1e-10 * total:
        raise elliptic.ZeroModeError("verify_commutator requires x-mean-free vorticity")
    w_hat = grid.project_nonzero_hat(w_hat)
    data = grid.to_physical(w_hat)

    u1_hat, u2_hat, _ = elliptic.velocity_hat(grid, w_hat)
    y = grid.y_row
    sq = lambda f: float(np.sum(f * f) * grid.cell_area)

    def pair_norm(f1_hat, f2_hat):
        f1 = grid.to_physical(f1_hat)
        f2 = grid.to_physical(f2_hat)
        return math.sqrt(sq(y * f1) + sq(y * f2))

    w_l2 = math.sqrt(sq(data))
    yw_l2 = math.sqrt(sq(y * data))
    return [
        IneqMargin("y_u", pair_norm(u1_hat, u2_hat), 3 * w_l2 + yw_l2),
        IneqMargin(
            "y_dy_u",
            pair_norm(grid.ddy_hat(u1_hat), grid.ddy_hat(u2_hat)),
            4 * w_l2 + yw_l2,
        ),
        IneqMargin(
            "y_dx_u",
            pair_norm(grid.ddx_hat(u1_hat), grid.ddx_hat(u2_hat)),
            3 * w_l2 + yw_l2,
        ),
    ]


def verify_commutator_relation(grid: Grid, f) -> float:
    """Relative residual of [y, Lap^{-1}]f = 2 Lap^{-2} dy f on nonzero modes.

    Exact on the unbounded strip; on the truncation the residual is set by
    the inverse-Laplacian tails at |y| = ly, so it is only small for data
    that decays well inside the domain (a negative control with undecayed
    data makes the residual large).
    """
    data = physical_data(grid, f)
    f_hat = grid.project_nonzero_hat(grid.to_spectral(data))
    f_l2 = grid.norm_l2(grid.to_physical(f_hat))
    if f_l2 == 0.0:
        return 0.0
    inv = elliptic.inverse_laplacian_nonzero_hat
    y_invf = grid.y_row * grid.to_physical(inv(grid, f_hat))
    yf_hat = grid.project_nonzero_hat(grid.to_spectral(grid.y_row * grid.to_physical(f_hat)))
    inv_yf = grid.to_physical(inv(grid, yf_hat))
    double_inv = grid.to_physical(inv(grid, inv(grid, grid.ddy_hat(f_hat))))
    residual = grid.norm_l2(y_invf - inv_yf - 2.0 * double_inv)
    return residual / f_l2


@dataclass(frozen=True)
class AnisoSobolevCheck:
    lhs: float  # max |f|
    rhs_core: float  # ||grad f||^(1-theta) * ||grad dx f||^theta
    theta: float

    @property
    def ratio(self) -> float:
        if self.rhs_core == 0.0:
            return 0.0
        return self.lhs / self.rhs_core


def verify_aniso_sobolev(grid: Grid, f_neq, theta: float) -> AnisoSobolevCheck:
    """Both sides of the anisotropic sup-norm interpolation inequality.

    The constant is not pinned; callers record the empirical ratio over a
    corpus and watch its stability under refinement.
    """
    if not 0.0 < theta <= 1.0:
        raise ValueError(f"theta must lie in (0, 1], got {theta}")
    data = physical_data(grid, f_neq)
    f_hat = grid.project_nonzero_hat(grid.to_spectral(data))
    data = grid.to_physical(f_hat)
    grad = math.sqrt(_plain_grad_sq(grid, f_hat))
    grad_dx = math.sqrt(_plain_grad_sq(grid, grid.ddx_hat(f_hat)))
    return AnisoSobolevCheck(
        lhs=float(np.max(np.abs(data))),
        rhs_core=grad ** (1.0 - theta) * grad_dx**theta,
        theta=theta,
    )


def _plain_grad_sq(grid: Grid, f_hat) -> float:
    gx = grid.to_physical(grid.ddx_hat(f_hat))
    gy = grid.to_physical(grid.ddy_hat(f_hat))
    return float((np.sum(gx * gx) + np.sum(gy * gy)) * grid.cell_area)


# -- truncation / mass monitors ------------------------------------------------


def boundary_mass_fraction(state: State) -> float:
    """Fraction of integral(|n| + |w|) inside the strip |y| > 0.9 ly."""
    grid = state.grid
    dens = np.abs(state.n.data) + np.abs(state.omega.data)
    total = float(np.sum(dens))
    if total == 0.0:
        return 0.0
    strip = np.abs(grid.y_row) > BOUNDARY_STRIP * grid.ly
    return float(np.sum(dens * strip)) / total


# -- per-run diagnostic series --------------------------------------------------

DIAG_COLUMNS = (
    "t",
    "dt",
    "mass",
    "linf_n",
    "x_norm_n_nonzero",
    "x_norm_dxn_nonzero",
    "x_norm_omega_nonzero",
    "grad_n_nonzero_xsq_cumint",
    "grad_omega_nonzero_xsq_cumint",
    "boundary_mass_fraction",
    "omega_mean_removed",
)


@dataclass
class DiagSeries:
    """Time series of the monitored norms, one row per diagnostic time."""

    rows: list = field(default_factory=list)

    def append_row(self, values: dict):
        self.rows.append(tuple(values[c] for c in DIAG_COLUMNS))

    def column(self, name: str) -> np.ndarray:
        idx = DIAG_COLUMNS.index(name)
        return np.asarray([r[idx] for r in self.rows])

    @property
    def boundary_flagged(self) -> bool:
        if not self.rows:
            return False
        return bool(np.any(self.column("boundary_mass_fraction") > BOUNDARY_FLAG_THRESHOLD))


class DiagnosticsCollector:
    """Integration callback: fills a DiagSeries and a BootstrapMonitor."""

    def __init__(self, initial: State, params: PhysParams, bootstrap: bool = True):
        self.params = params
        self.series = DiagSeries()
        self.monitor = BootstrapMonitor(initial, params) if bootstrap else None

    def __call__(self, state: State, dt: float):
        grid = state.grid
        nq_hat = grid.project_nonzero_hat(state.n_hat)
        wq_hat = grid.project_nonzero_hat(state.w_hat)
        _, _, removed = elliptic.velocity_hat(grid, state.w_hat)
        if self.monitor is not None:
            self.monitor.update(state)
            cum_n, cum_w = self.monitor.cum_grad_n, self.monitor.cum_grad_w
        else:
            cum_n = cum_w = 0.0
        self.series.append_row(
            {
                "t": state.t,
                "dt": dt,
                "mass": state.mass(),
                "linf_n": state.linf_n(),
                "x_norm_n_nonzero": math.sqrt(
                    _x_norm_sq(grid, grid.to_physical(nq_hat))
                ),
                "x_norm_dxn_nonzero": math.sqrt(
                    _x_norm_sq(grid, grid.to_physical(grid.ddx_hat(state.n_hat)))
                ),
                "x_norm_omega_nonzero": math.sqrt(
                    _x_norm_sq(grid, grid.to_physical(wq_hat))
                ),
                "grad_n_nonzero_xsq_cumint": cum_n,
                "grad_omega_nonzero_xsq_cumint": cum_w,
                "boundary_mass_fraction": boundary_mass_fraction(state),
                "omega_mean_removed": float(np.real(removed)),
            }
        )
