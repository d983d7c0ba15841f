import numpy as np
import pytest

from conftest import random_smooth_field, smooth_density
from pksns.dynamics import PhysParams, State, Terms
from pksns.fields import norm_x
from pksns.grid import GridSpec, make_grid
from pksns.timestepper import IntegrationControls, adapt_dt, integrate, step

DIFFUSION_ONLY = Terms(shear=False, chemotaxis=False, transport=False, vorticity=False)


@pytest.fixture
def grid():
    return make_grid(GridSpec(nx=32, ny=64, ly=6.0))


def zero(grid):
    return np.zeros((grid.nx, grid.ny))


class TestStep:
    def test_pure_diffusion_single_mode(self, grid):
        params = PhysParams(a=10.0, horizon=1.0)
        n = np.cos(grid.x)[:, None] * np.ones((1, grid.ny))  # (kx, ky) = (1, 0)
        state = State.from_fields(grid, n, zero(grid))
        out = step(state, params, dt=0.1, terms=DIFFUSION_ONLY)
        expected = np.exp(-0.01) * n
        assert np.max(np.abs(out.n.data - expected)) < 1e-14

    def test_exact_heat_factor_all_modes(self, grid, rng):
        params = PhysParams(a=3.0, horizon=1.0)
        n = random_smooth_field(grid, rng)
        state = State.from_fields(grid, n, zero(grid))
        dt = 0.037
        out = state
        for _ in range(5):
            out = step(out, params, dt, terms=DIFFUSION_ONLY)
        expected = np.exp(-grid.ksq * (5 * dt) / params.a) * state.n_hat
        assert np.max(np.abs(out.n_hat - expected)) < 1e-14 * np.max(np.abs(state.n_hat))

    def test_homogeneous_fixed_point(self, grid):
        params = PhysParams(a=50.0, horizon=1.0)
        state = State.from_fields(grid, 1.3 * np.ones((grid.nx, grid.ny)), zero(grid))
        out = step(state, params, dt=0.01)
        assert np.max(np.abs(out.n.data - 1.3)) < 1e-14
        assert np.max(np.abs(out.omega.data)) < 1e-14

    def test_advection_exact_characteristics(self):
        # d_t f + y^2 d_x f = 0 with f(0) = sin(x) g(y) has the closed-form
        # solution sin(x - y^2 t) g(y); halving dt must cut the error by at
        # least the formal order of the scheme.
        spec = GridSpec(nx=16, ny=128, ly=4.0)
        grid = make_grid(spec)
        g_y = np.exp(-(grid.y_row**2) / 2.0)
        f0 = np.sin(grid.x)[:, None] * g_y
        terms = Terms(diffusion=False, chemotaxis=False, transport=False, vorticity=False)
        params = PhysParams(a=1.0, horizon=1.0)
        t_end = 0.1
        exact = np.sin(grid.x[:, None] - grid.ysq_row * t_end) * g_y

        def error(dt):
            nsteps = int(round(t_end / dt))
            state = State.from_fields(grid, f0, zero(grid))
            for _ in range(nsteps):
                state = step(state, params, dt, terms)
            return np.max(np.abs(state.n.data - exact))

        e1, e2 = error(2e-3), error(1e-3)
        assert e1 / e2 > 3.4
        assert e2 < 1e-5

    def test_rejects_nonpositive_dt(self, grid):
        params = PhysParams(a=10.0, horizon=1.0)
        state = State.from_fields(grid, zero(grid), zero(grid))
        with pytest.raises(ValueError):
            step(state, params, dt=0.0)


class TestSelfConvergence:
    def test_nonlinear_order_two(self, rng):
        grid = make_grid(GridSpec(nx=32, ny=64, ly=4.0))
        params = PhysParams(a=5.0, horizon=1.0)
        n = random_smooth_field(grid, rng, y_width=1.0)
        n = (n - n.min() + 0.2) * np.exp(-(grid.y_row**2) / 4.0)
        w = 0.4 * random_smooth_field(grid, rng, y_width=1.0)
        base = State.from_fields(grid, n, w)
        t_end = 0.04

        def solve(dt):
            state = base
            for _ in range(int(round(t_end / dt))):
                state = step(state, params, dt)
            return state.n.data

        c1, c2, c3 = solve(2e-3), solve(1e-3), solve(5e-4)
        e1 = np.max(np.abs(c1 - c2))
        e2 = np.max(np.abs(c2 - c3))
        assert 3.0 < e1 / e2 < 5.2


class TestAdaptDt:
    def test_shear_limited(self):
        grid = make_grid(GridSpec(nx=64, ny=128, ly=12.0))
        params = PhysParams(a=1000.0, horizon=1.0)
        state = State.from_fields(grid, zero(grid), zero(grid))
        dt = adapt_dt(state, params)
        assert abs(dt - params.cfl * grid.dx / 144.0) < 1e-15

    def test_doubled_velocity_halves_dt(self, grid, rng):
        params = PhysParams(a=100.0, horizon=1.0)
        terms = Terms(shear=False, chemotaxis=False)
        w = random_smooth_field(grid, rng)
        s1 = State.from_fields(grid, zero(grid), w)
        s2 = State.from_fields(grid, zero(grid), 2.0 * w)
        dt1 = adapt_dt(s1, params, terms)
        dt2 = adapt_dt(s2, params, terms)
        assert abs(dt2 - dt1 / 2.0) < 1e-12 * dt1

    def test_density_growth_shrinks_dt(self, grid, rng):
        params = PhysParams(a=2.0, horizon=1.0)
        n = smooth_density(grid, rng) + 0.1
        s1 = State.from_fields(grid, n, zero(grid))
        s2 = State.from_fields(grid, 5.0 * n, zero(grid))
        assert adapt_dt(s2, params) < adapt_dt(s1, params)


class TestIntegrate:
    def test_zero_data_completes(self, grid):
        params = PhysParams(a=10.0, horizon=0.05)
        state = State.from_fields(grid, zero(grid), zero(grid))
        norms = []
        controls = IntegrationControls(
            diag_cadence=0.01, on_diagnostic=lambda s, dt: norms.append(norm_x(grid, s.n))
        )
        outcome = integrate(state, params, controls)
        assert outcome.completed
        assert all(v == 0.0 for v in norms)

    def test_diagnostics_land_on_cadence(self, grid, rng):
        params = PhysParams(a=10.0, horizon=0.2)
        n = smooth_density(grid, rng)
        state = State.from_fields(grid, n, zero(grid))
        times = []
        controls = IntegrationControls(
            diag_cadence=0.05, on_diagnostic=lambda s, dt: times.append(s.t)
        )
        outcome = integrate(state, params, controls)
        assert outcome.completed
        expected = [0.0, 0.05, 0.1, 0.15, 0.2]
        assert len(times) == len(expected)
        assert np.allclose(times, expected, atol=1e-9)

    def test_mass_conserved_along_run(self, grid, rng):
        params = PhysParams(a=5.0, horizon=0.3)
        n = smooth_density(grid, rng)
        w = 0.2 * random_smooth_field(grid, rng)
        state = State.from_fields(grid, n, w)
        m0 = state.mass()
        masses = []
        controls = IntegrationControls(
            diag_cadence=0.05, on_diagnostic=lambda s, dt: masses.append(s.mass())
        )
        outcome = integrate(state, params, controls)
        assert outcome.completed
        assert max(abs(m - m0) / m0 for m in masses) < 1e-10

    def test_linf_cap_triggers_blowup(self, grid, rng):
        n = smooth_density(grid, rng) + 0.5
        params = PhysParams(a=10.0, horizon=1.0, linf_cap=0.1)
        state = State.from_fields(grid, n, zero(grid))
        outcome = integrate(state, params, IntegrationControls())
        assert outcome.status == "blowup"
        assert outcome.linf_n > 0.1

    def test_nan_state_signals_blowup(self, grid):
        n = np.ones((grid.nx, grid.ny))
        n[3, 4] = np.nan
        params = PhysParams(a=10.0, horizon=1.0)
        state = State.from_fields(grid, n, zero(grid))
        outcome = integrate(state, params, IntegrationControls())
        assert outcome.status == "blowup"

    def test_dt_collapse_detection(self, grid, rng):
        n = smooth_density(grid, rng) + 0.5
        params = PhysParams(a=10.0, horizon=1.0, dt_min=10.0)
        state = State.from_fields(grid, n, zero(grid))
        outcome = integrate(state, params, IntegrationControls())
        assert outcome.status == "dt_collapse"

    def test_negativity_abort(self, grid):
        n = np.ones((grid.nx, grid.ny))
        n[0, 0] = -0.5
        params = PhysParams(a=10.0, horizon=1.0)
        state = State.from_fields(grid, n, zero(grid))
        outcome = integrate(state, params, IntegrationControls(diag_cadence=0.01))
        assert outcome.status == "aborted"
        assert "negativity" in outcome.reason

    def test_determinism_bit_identical(self, grid, rng):
        n = smooth_density(grid, rng)
        w = 0.1 * random_smooth_field(grid, rng)
        params = PhysParams(a=8.0, horizon=0.1)

        def run():
            series = []
            controls = IntegrationControls(
                diag_cadence=0.02,
                on_diagnostic=lambda s, dt: series.append((s.t, norm_x(grid, s.n))),
            )
            integrate(State.from_fields(grid, n, w), params, controls)
            return series

        assert run() == run()
