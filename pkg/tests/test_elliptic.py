import numpy as np
import pytest

from conftest import random_smooth_field
from pksns.elliptic import (
    ZeroModeError,
    biot_savart,
    inverse_dyy_zero,
    inverse_laplacian_nonzero,
    solve_screened_poisson,
)
from pksns.fields import ddx, ddy, laplacian, project_nonzero


class TestScreenedPoisson:
    def test_cos_x_eigenfunction(self, grid_pi):
        n = np.cos(grid_pi.x)[:, None] * np.ones((1, grid_pi.ny))
        c = solve_screened_poisson(grid_pi, n)
        assert np.max(np.abs(c.data - n / 2.0)) < 1e-13

    def test_zero(self, grid_pi):
        c = solve_screened_poisson(grid_pi, np.zeros((grid_pi.nx, grid_pi.ny)))
        assert np.max(np.abs(c.data)) == 0.0

    def test_residual_on_random_field(self, grid_wide, rng):
        n = random_smooth_field(grid_wide, rng)
        c = solve_screened_poisson(grid_wide, n)
        residual = -laplacian(grid_wide, c.data) + c.data - n
        assert grid_wide.norm_l2(residual) <= 1e-10 * grid_wide.norm_l2(n)

    def test_rejects_nan(self, grid_pi):
        n = np.zeros((grid_pi.nx, grid_pi.ny))
        n[0, 0] = np.nan
        with pytest.raises(ValueError):
            solve_screened_poisson(grid_pi, n)


class TestInverseLaplacianNonzero:
    def test_cos_x(self, grid_pi):
        f = np.cos(grid_pi.x)[:, None] * np.ones((1, grid_pi.ny))
        out = inverse_laplacian_nonzero(grid_pi, f)
        assert np.max(np.abs(out.data + f)) < 1e-13

    def test_product_mode(self, grid_pi):
        f = np.sin(grid_pi.x)[:, None] * np.cos(grid_pi.y_row)
        out = inverse_laplacian_nonzero(grid_pi, f)
        assert np.max(np.abs(out.data + f / 2.0)) < 1e-13

    def test_forward_laplacian_recovers(self, grid_wide, rng):
        f = project_nonzero(grid_wide, random_smooth_field(grid_wide, rng))
        out = inverse_laplacian_nonzero(grid_wide, f)
        back = laplacian(grid_wide, out.data)
        assert grid_wide.norm_l2(back - f) <= 1e-10 * grid_wide.norm_l2(f)

    def test_zero_mode_rejected(self, grid_pi):
        f = np.ones((grid_pi.nx, 1)) * np.cos(grid_pi.y_row)
        with pytest.raises(ZeroModeError):
            inverse_laplacian_nonzero(grid_pi, f)


class TestInverseDyyZero:
    def test_cos_y_eigenfunction(self, grid_pi):
        f = np.ones((grid_pi.nx, 1)) * np.cos(grid_pi.y_row)
        out, removed = inverse_dyy_zero(grid_pi, f)
        assert abs(removed) < 1e-14
        assert np.max(np.abs(out.data + f)) < 1e-13

    def test_constant_reports_mean(self, grid_pi):
        f = 2.5 * np.ones((grid_pi.nx, grid_pi.ny))
        out, removed = inverse_dyy_zero(grid_pi, f)
        assert abs(removed - 2.5) < 1e-14
        assert np.max(np.abs(out.data)) < 1e-14

    def test_forward_dyy_recovers_mean_free_part(self, grid_wide, rng):
        coeffs = rng.standard_normal(grid_wide.nyr) + 1j * rng.standard_normal(grid_wide.nyr)
        coeffs[-1] = 0.0  # keep the profile below the Nyquist mode
        profile = np.fft.irfft(coeffs, n=grid_wide.ny)
        f = np.ones((grid_wide.nx, 1)) * profile[None, :]
        out, removed = inverse_dyy_zero(grid_wide, f)
        back = ddy(grid_wide, ddy(grid_wide, out.data))
        target = f - removed
        assert grid_wide.norm_l2(back - target) <= 1e-10 * max(
            grid_wide.norm_l2(target), 1e-30
        )

    def test_x_dependent_input_rejected(self, grid_pi):
        f = np.cos(grid_pi.x)[:, None] * np.ones((1, grid_pi.ny))
        with pytest.raises(ZeroModeError):
            inverse_dyy_zero(grid_pi, f)


class TestBiotSavart:
    def test_cos_x_vorticity(self, grid_pi):
        w = np.cos(grid_pi.x)[:, None] * np.ones((1, grid_pi.ny))
        u, removed = biot_savart(grid_pi, w)
        assert abs(removed) < 1e-14
        expected_u2 = np.sin(grid_pi.x)[:, None] * np.ones((1, grid_pi.ny))
        assert np.max(np.abs(u.u1.data)) < 1e-13
        assert np.max(np.abs(u.u2.data - expected_u2)) < 1e-13

    def test_pure_zero_mode(self, grid_pi):
        w = np.ones((grid_pi.nx, 1)) * np.cos(grid_pi.y_row)
        u, removed = biot_savart(grid_pi, w)
        assert abs(removed) < 1e-13
        expected_u1 = -np.ones((grid_pi.nx, 1)) * np.sin(grid_pi.y_row)
        assert np.max(np.abs(u.u1.data - expected_u1)) < 1e-13
        assert np.max(np.abs(u.u2.data)) == 0.0
        # curl identity: dy u1 = -w
        assert np.max(np.abs(ddy(grid_pi, u.u1.data) + w)) < 1e-12

    def test_divergence_free_and_curl_recovers(self, grid_wide, rng):
        w = random_smooth_field(grid_wide, rng)
        u, removed = biot_savart(grid_wide, w)
        div = ddx(grid_wide, u.u1.data) + ddy(grid_wide, u.u2.data)
        assert grid_wide.norm_l2(div) <= 1e-10 * grid_wide.norm_l2(w)
        curl = ddx(grid_wide, u.u2.data) - ddy(grid_wide, u.u1.data)
        assert grid_wide.norm_l2(curl - (w - removed)) <= 1e-10 * grid_wide.norm_l2(w)

    def test_u2_has_no_zero_mode(self, grid_wide, rng):
        w = random_smooth_field(grid_wide, rng)
        u, _ = biot_savart(grid_wide, w)
        assert np.max(np.abs(u.u2.data.mean(axis=0))) < 1e-13
