"""
Time integration: exact per-mode treatment of the stiff (1/A) Laplacian via
an integrating factor, with the remaining terms (shear advection,
nonlinearities, the nonlocal vorticity term and the density forcing)
advanced by an explicit three-stage Runge-Kutta scheme.

The scheme is second order with the stability polynomial of the classical
third-order scheme (1 + z + z^2/2 + z^3/6), so the purely dispersive shear
term is stable along the imaginary axis up to |z| = sqrt(3); plain
second-order two-stage schemes are not.

Step size follows the advective CFL of the shear and velocity fields plus a
diffusion-like cap for the explicitly treated chemotaxis flux; collapse of
the step size below dt_min is the numerical blow-up proxy.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import elliptic
from .dynamics import FULL, BlowUpSignal, PhysParams, State, Terms, explicit_rhs_hat
from .grid import Grid

#: fractional tolerance when landing on cadence/horizon times
_TIME_EPS = 1e-12

#: admissible negative excursion of n relative to max |n| before the run is
#: declared under-resolved (clipping would mask the failure and break mass
#: conservation, so the run aborts instead)
NEGATIVITY_TOL = 1e-6


@dataclass
class RunOutcome:
    """Terminal classification of one integration."""

    status: str  # "completed" | "blowup" | "dt_collapse" | "aborted"
    t: float
    linf_n: float
    steps: int
    reason: str = ""

    @property
    def completed(self) -> bool:
        return self.status == "completed"


def _exp_factors(grid: Grid, params: PhysParams, dt: float, cache: dict):
    key = (dt, params.a)
    if cache.get("key") != key:
        sym = -grid.ksq * (dt / params.a)
        cache["key"] = key
        cache["half"] = np.exp(0.5 * sym)
        cache["full"] = np.exp(sym)
    return cache["half"], cache["full"]


def step(
    state: State,
    params: PhysParams,
    dt: float,
    terms: Terms = FULL,
    _exp_cache: dict | None = None,
) -> State:
    """Advance one step of size dt; returns a new State at t + dt."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    grid = state.grid
    if terms.diffusion:
        if _exp_cache is None:
            _exp_cache = {}
        eh, e1 = _exp_factors(grid, params, dt, _exp_cache)
    else:
        eh = e1 = 1.0

    n0, w0 = state.n_hat, state.w_hat
    evolve_w = terms.vorticity  # frozen fluid: w is inert, skip its algebra

    def combine(u, k, weight, factor):
        out = u + weight * k
        if factor is not None:
            out *= factor
        return out

    half = eh if terms.diffusion else None
    full = e1 if terms.diffusion else None

    k1n, k1w = explicit_rhs_hat(grid, params, n0, w0, terms)
    n_s = combine(n0, k1n, 0.5 * dt, half)
    w_s = combine(w0, k1w, 0.5 * dt, half) if evolve_w else w0
    k2n, k2w = explicit_rhs_hat(grid, params, n_s, w_s, terms)

    n_s = combine(n0, k1n, dt / 3.0, full)
    n_s += _scaled(k2n, half, 2.0 * dt / 3.0)
    if evolve_w:
        w_s = combine(w0, k1w, dt / 3.0, full)
        w_s += _scaled(k2w, half, 2.0 * dt / 3.0)
    k3n, k3w = explicit_rhs_hat(grid, params, n_s, w_s, terms)

    n_new = combine(n0, k1n, 0.5 * dt, full)
    k3n *= 0.5 * dt
    n_new += k3n
    if evolve_w:
        w_new = combine(w0, k1w, 0.5 * dt, full)
        k3w *= 0.5 * dt
        w_new += k3w
    else:
        w_new = w0 if not terms.diffusion else e1 * w0
    return State(grid, n_new, w_new, state.t + dt)


def _scaled(k, factor, weight):
    out = k * weight
    if factor is not None:
        out *= factor
    return out


def adapt_dt(state: State, params: PhysParams, terms: Terms = FULL) -> float:
    """CFL-limited step size for the explicit terms.

    dt = cfl * min( dx / max|y^2 + u1|,  dy / max|u2|,
                    A * min(dx, dy)^2 * safety )

    with safety = 1 / (1 + max|n| * min(dx, dy)^2) for the explicitly
    treated chemotaxis flux: its stiffness saturates at ~ max|n| / A (the
    symbol k^2/(k^2+1) of the flux linearization is bounded), so the cap
    tends to A * min^2 for modest densities and to cfl * A / max|n| as the
    density concentrates; the latter shrink is the mechanism by which a
    blow-up collapses the step size.  The velocity maxima additionally
    include the chemotactic drift (1/A) grad c.
    """
    grid = state.grid
    inv_a = 1.0 / params.a

    vx = 0.0
    vy = 0.0
    if terms.shear or terms.vorticity:
        if terms.vorticity:
            u = state.u
            shear_profile = grid.ysq_row if terms.shear else 0.0
            vx = float(np.max(np.abs(shear_profile + u.u1.data)))
            vy = float(np.max(np.abs(u.u2.data)))
        elif terms.shear:
            vx = float(grid.ly**2)
    linf_n = state.linf_n()
    if terms.chemotaxis and linf_n > 0:
        c_hat = elliptic.screened_poisson_hat(grid, state.n_hat)
        vx += inv_a * float(np.max(np.abs(grid.to_physical(grid.ddx_hat(c_hat)))))
        vy += inv_a * float(np.max(np.abs(grid.to_physical(grid.ddy_hat(c_hat)))))

    limits = []
    if vx > 0:
        limits.append(grid.dx / vx)
    if vy > 0:
        limits.append(grid.dy / vy)
    if terms.chemotaxis:
        h_sq = min(grid.dx, grid.dy) ** 2
        limits.append(params.a * h_sq / (1.0 + linf_n * h_sq))
    if not limits:
        return params.horizon
    return params.cfl * min(limits)


@dataclass
class IntegrationControls:
    """Optional knobs for :func:`integrate`.

    negativity_tol is the admissible relative negative excursion of n before
    the run aborts as under-resolved.  Runs that must follow a genuine
    blow-up all the way to the sup-norm cap relax it (a collapsing core
    always passes through the grid scale before the cap is reached).
    """

    terms: Terms = FULL
    diag_cadence: float = 0.0  # 0 disables cadence alignment
    on_diagnostic: object = None  # callable(state, dt) or None
    max_steps: int = 100_000_000
    dt_fixed: float = 0.0  # > 0 overrides adaptive stepping
    negativity_tol: float = NEGATIVITY_TOL
    _exp_cache: dict = field(default_factory=dict)


def integrate(initial: State, params: PhysParams, controls: IntegrationControls | None = None) -> RunOutcome:
    """Run from the initial state to the horizon or a terminal event.

    Diagnostics fire at t = 0, at every cadence multiple (step sizes are
    clipped to land on them exactly) and at the final time.  Deterministic:
    identical inputs produce identical trajectories and outcomes.
    """
    if controls is None:
        controls = IntegrationControls()
    state = initial
    steps = 0
    horizon = params.horizon
    cadence = controls.diag_cadence
    next_diag = state.t  # fire immediately

    last_dt = 0.0
    while True:
        if not state.is_finite():
            return RunOutcome("blowup", state.t, float("inf"), steps, "NaN/Inf in state")
        linf = state.linf_n()
        if linf > params.linf_cap:
            return RunOutcome(
                "blowup", state.t, linf, steps, f"max|n| exceeded cap {params.linf_cap:g}"
            )

        fire = cadence > 0 and state.t >= next_diag - _TIME_EPS * max(1.0, horizon)
        at_end = state.t >= horizon * (1.0 - _TIME_EPS)
        if fire or at_end or steps == 0:
            nmin = float(np.min(state.n.data))
            if nmin < -controls.negativity_tol * max(linf, 1e-300):
                return RunOutcome(
                    "aborted",
                    state.t,
                    linf,
                    steps,
                    f"density negativity {nmin:.3e} beyond resolution tolerance",
                )
            if controls.on_diagnostic is not None:
                controls.on_diagnostic(state, last_dt)
            if fire:
                while next_diag <= state.t + _TIME_EPS * max(1.0, horizon):
                    next_diag += cadence

        if at_end:
            return RunOutcome("completed", state.t, linf, steps)
        if steps >= controls.max_steps:
            return RunOutcome("aborted", state.t, linf, steps, "max step count reached")

        if controls.dt_fixed > 0:
            dt = controls.dt_fixed
        else:
            dt = adapt_dt(state, params, controls.terms)
            if dt < params.dt_min:
                return RunOutcome(
                    "dt_collapse", state.t, linf, steps, f"dt fell to {dt:.3e}"
                )
        dt = min(dt, horizon - state.t)
        if cadence > 0:
            dt = min(dt, next_diag - state.t)

        try:
            state = step(state, params, dt, controls.terms, controls._exp_cache)
        except BlowUpSignal as sig:
            return RunOutcome("blowup", sig.t, sig.linf_n, steps, sig.reason)
        last_dt = dt
        steps += 1
