"""
Config-driven experiment runners behind the CLI.

Every runner writes deterministic artifacts (fixed float formatting, fixed
iteration order) into its output directory:

    simulate  -> diagnostics.csv, bootstrap.json, summary.json, final.snap
    semigroup -> cell_<A>_<op>.json + .csv per cell, summary.json
    sweep     -> outcomes.csv, summary.json (with monotonicity report)
    blowup    -> flow_off/, flow_on/ (simulate artifacts), comparison.json
    verify    -> margins.json

All time columns are in the rescaled units of the coupled system; the
unrescaled conversion is t_physical = t / A.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import diagnostics as diag
from .config import (
    ConfigError,
    GaussianBlob,
    ModeProduct,
    ScenarioConfig,
    resolve_scale,
)
from .dynamics import PhysParams, State, Terms
from .fields import project_nonzero
from .grid import Grid, GridSpec, make_grid
from .semigroup import (
    OPERATOR_FULL,
    envelope_check,
    evolve_linear,
    fit_decay_rate,
    lambda_a,
)
from .snapshot import Snapshot, write_snapshot
from .timestepper import IntegrationControls, integrate

EXIT_OK = 0
EXIT_BLOWUP = 2
EXIT_CONFIG = 3
EXIT_NUMERICAL = 4

_FMT = "%.17e"


def _fmt(value: float) -> str:
    return _FMT % float(value)


def _write_csv(path: Path, header_lines, columns, rows):
    with open(path, "w") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _write_json(path: Path, payload: dict):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _outcome_dict(outcome) -> dict:
    return {
        "status": outcome.status,
        "t": outcome.t,
        "linf_n": outcome.linf_n,
        "steps": outcome.steps,
        "reason": outcome.reason,
    }


# -- simulate -------------------------------------------------------------------


def _simulate_once(
    grid: Grid,
    params: PhysParams,
    n0: np.ndarray,
    w0: np.ndarray,
    out: Path,
    terms: Terms = Terms(),
    diag_cadence: float = 0.05,
    snapshot_cadence: float = 0.0,
    t0: float = 0.0,
    bootstrap: bool = True,
    negativity_tol: float = None,
):
    """Run one integration and write the simulate artifact set into `out`."""
    out.mkdir(parents=True, exist_ok=True)
    initial = State.from_fields(grid, n0, w0, t=t0)
    collector = diag.DiagnosticsCollector(initial, params, bootstrap=bootstrap)
    initial_mass = initial.mass()
    initial_linf = initial.linf_n()

    snap_times = []
    last_state = [initial]

    def callback(state, dt):
        collector(state, dt)
        last_state[0] = state
        if snapshot_cadence > 0:
            k = int(round(state.t / snapshot_cadence))
            if abs(state.t - k * snapshot_cadence) < 1e-9 and k not in snap_times:
                snap_times.append(k)
                write_snapshot(
                    out / f"snapshot_{k:06d}.snap",
                    Snapshot(
                        grid.nx, grid.ny, grid.ly, state.t, params.a,
                        state.n.data, state.omega.data,
                    ),
                )

    kwargs = {} if negativity_tol is None else {"negativity_tol": negativity_tol}
    controls = IntegrationControls(
        terms=terms, diag_cadence=diag_cadence, on_diagnostic=callback, **kwargs
    )
    outcome = integrate(initial, params, controls)

    final = last_state[0]
    if final.is_finite():
        write_snapshot(
            out / "final.snap",
            Snapshot(
                grid.nx, grid.ny, grid.ly, final.t, params.a,
                final.n.data, final.omega.data,
            ),
        )
    header = [
        "diagnostic time series; one row per diagnostic time",
        "time t in rescaled units of the coupled system; t_physical = t / A"
        f" with A = {params.a!r}",
        "columns: " + ", ".join(diag.DIAG_COLUMNS),
        "norms by uniform-grid quadrature; X-norm^2 = L2^2 + ||y f||^2",
        "cumint columns are trapezoid-rule integrals of ||grad f_neq||_X^2 dt",
    ]
    _write_csv(out / "diagnostics.csv", header, diag.DIAG_COLUMNS, collector.series.rows)
    if collector.monitor is not None:
        report = collector.monitor.report()
        payload = report.as_dict()
        payload["all_satisfied"] = report.all_satisfied
        _write_json(out / "bootstrap.json", payload)

    mass_series = collector.series.column("mass") if collector.series.rows else np.array([])
    mass_drift = (
        float(np.max(np.abs(mass_series - initial_mass)) / initial_mass)
        if initial_mass > 0 and mass_series.size
        else 0.0
    )
    summary = {
        "outcome": _outcome_dict(outcome),
        "initial_mass": initial_mass,
        "initial_linf_n": initial_linf,
        "mass_drift_rel": mass_drift,
        "growth_factor": (outcome.linf_n / initial_linf) if initial_linf > 0 else 0.0,
        "boundary_flagged": collector.series.boundary_flagged,
        "bootstrap_all_satisfied": (
            collector.monitor.report().all_satisfied if collector.monitor else None
        ),
    }
    _write_json(out / "summary.json", summary)
    return outcome, collector


def run_simulate(cfg: ScenarioConfig, out: Path) -> int:
    grid = make_grid(cfg.grid)
    a = cfg.a_value()
    n0, w0, t0 = cfg.initial.build(grid, a)
    params = cfg.build_params(initial_linf=float(np.max(np.abs(n0))))
    outcome, _ = _simulate_once(
        grid,
        params,
        n0,
        w0,
        out,
        diag_cadence=cfg.diag_cadence,
        snapshot_cadence=cfg.snapshot_cadence,
        t0=t0,
    )
    if outcome.status == "completed":
        code = EXIT_OK
    elif outcome.status in ("blowup", "dt_collapse"):
        code = EXIT_BLOWUP
    else:
        code = EXIT_NUMERICAL
    return code


# -- semigroup ------------------------------------------------------------------


def _semigroup_cell(args) -> dict:
    spec, a, operator, horizon_factor, samples, width, kx, cfl, diffusion = args
    grid = make_grid(spec)
    params = PhysParams(a=a, horizon=1.0, cfl=cfl)
    f_in = ModeProduct(kx=(kx,), y_width=width).build(grid)
    horizon = horizon_factor / lambda_a(a)
    series = evolve_linear(
        grid, f_in, params, operator=operator, horizon=horizon,
        samples=samples, diffusion=diffusion,
    )
    fit = fit_decay_rate(series.t, series.x_norm)
    env = envelope_check(series, params)
    return {
        "a": a,
        "operator": operator,
        "lambda_a": lambda_a(a),
        "horizon": horizon,
        "fit": {
            "rate": fit.rate,
            "prefactor": fit.prefactor,
            "window": list(fit.window),
            "residual": fit.residual,
        },
        "envelope": {"passed": env.passed, "margin": env.margin},
        "rate_scaled": fit.rate * math.sqrt(a) * math.log(a),
        "t": [float(v) for v in series.t],
        "x_norm": [float(v) for v in series.x_norm],
    }


def run_semigroup(cfg: ScenarioConfig, out: Path, threads: int = 1) -> int:
    out.mkdir(parents=True, exist_ok=True)
    table = cfg.extra
    a_values = table.get("a_values", [50.0, 200.0, 800.0])
    operators = table.get("operators", [OPERATOR_FULL])
    horizon_factor = float(table.get("horizon_factor", 3.0))
    samples = int(table.get("samples", 200))
    width = float(table.get("data_width", 1.0))
    kx = int(table.get("data_kx", 1))
    diffusion = bool(table.get("diffusion", True))
    cfl = float(cfg.params_table.get("cfl", 0.4))

    cells = [
        (cfg.grid, float(a), op, horizon_factor, samples, width, kx, cfl, diffusion)
        for a in a_values
        for op in operators
    ]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_semigroup_cell, cells))
    else:
        results = [_semigroup_cell(cell) for cell in cells]

    all_pass = True
    summary_cells = []
    for res in results:
        name = f"cell_A{res['a']:g}_{res['operator']}"
        series_rows = list(zip(res["t"], res["x_norm"]))
        _write_csv(
            out / f"{name}.csv",
            [
                "linear evolution norm series",
                f"A = {res['a']!r}, operator = {res['operator']}",
                "t in rescaled units; t_physical = t / A",
            ],
            ("t", "x_norm"),
            series_rows,
        )
        payload = dict(res)
        del payload["t"], payload["x_norm"]
        _write_json(out / f"{name}.json", payload)
        all_pass &= res["envelope"]["passed"]
        summary_cells.append(
            {k: res[k] for k in ("a", "operator", "lambda_a", "rate_scaled", "envelope", "fit")}
        )

    scaled = [c["rate_scaled"] for c in summary_cells if c["operator"] == OPERATOR_FULL]
    scaling_spread = (max(scaled) / min(scaled)) if len(scaled) >= 2 and min(scaled) > 0 else None

    # Comparison of the two operators at equal A: the expectation is that the
    # plain shear-diffusion operator decays at least as fast as the one with
    # the nonlocal term; violations are reported, never fatal (the nonlocal
    # term detunes the y = 0 critical layer and can empirically win).
    by_a = {}
    for c in summary_cells:
        by_a.setdefault(c["a"], {})[c["operator"]] = c["fit"]["rate"]
    comparison = []
    for a, rates in sorted(by_a.items()):
        if "L" in rates and "L_tilde" in rates:
            comparison.append(
                {
                    "a": a,
                    "rate_L": rates["L"],
                    "rate_L_tilde": rates["L_tilde"],
                    "ratio": rates["L"] / rates["L_tilde"] if rates["L_tilde"] else None,
                    "plain_operator_at_least_as_fast": rates["L"] >= 0.8 * rates["L_tilde"],
                }
            )

    _write_json(
        out / "summary.json",
        {
            "cells": summary_cells,
            "all_envelopes_passed": all_pass,
            "rate_scaling_spread": scaling_spread,
            "operator_comparison": comparison,
        },
    )
    return EXIT_OK if all_pass else EXIT_NUMERICAL


# -- sweep ----------------------------------------------------------------------


def _sweep_cell(args) -> dict:
    spec, a, scale, mass_value, horizon, width, omega_y_width, params_table = args
    grid = make_grid(spec)
    n0 = GaussianBlob(mass=mass_value, width=width).build(grid)
    omega_norm = resolve_scale(scale, a)
    w0 = (
        ModeProduct(kx=(1,), y_width=omega_y_width, x_norm=omega_norm).build(grid)
        if omega_norm > 0
        else np.zeros((spec.nx, spec.ny))
    )
    linf0 = float(np.max(np.abs(n0)))
    cap_factor = float(params_table.get("linf_cap_factor", 1e4))
    params = PhysParams(
        a=a,
        horizon=horizon,
        linf_cap=cap_factor * linf0,
        dt_min=float(params_table.get("dt_min", 1e-9)),
        cfl=float(params_table.get("cfl", 0.4)),
    )
    initial = State.from_fields(grid, n0, w0)
    outcome = integrate(initial, params, IntegrationControls())
    return {
        "a": a,
        "omega_scale": omega_norm,
        "mass": mass_value,
        "status": outcome.status,
        "t_end": outcome.t,
        "linf_n": outcome.linf_n,
        "growth": outcome.linf_n / linf0 if linf0 > 0 else 0.0,
        "steps": outcome.steps,
    }


def run_sweep(cfg: ScenarioConfig, out: Path, threads: int = 1) -> int:
    out.mkdir(parents=True, exist_ok=True)
    table = cfg.extra
    a_values = [float(a) for a in table["a_values"]]
    masses = [float(m) for m in table["masses"]]
    scales = table.get("omega_scales", [0.0])
    horizon = float(table.get("horizon", 1.0))
    width = float(table.get("width", 0.5))
    omega_y_width = float(table.get("omega_y_width", 1.0))

    cells = [
        (cfg.grid, a, scale, m, horizon, width, omega_y_width, cfg.params_table)
        for m in masses
        for scale in scales
        for a in sorted(a_values)
    ]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_sweep_cell, cells))
    else:
        results = [_sweep_cell(cell) for cell in cells]

    columns = ("a", "omega_scale", "mass", "completed", "t_end", "linf_n", "growth", "steps")
    rows = [
        (
            r["a"],
            r["omega_scale"],
            r["mass"],
            1.0 if r["status"] == "completed" else 0.0,
            r["t_end"],
            r["linf_n"],
            r["growth"],
            r["steps"],
        )
        for r in results
    ]
    _write_csv(
        out / "outcomes.csv",
        [
            "suppression sweep outcome grid",
            "completed = 1 means the run reached its horizon; 0 covers blow-up,"
            " dt collapse and under-resolution aborts",
            "t in rescaled units; t_physical = t / A",
        ],
        columns,
        rows,
    )

    # monotonicity in A of the completed/blow-up boundary at fixed (mass, scale)
    warnings = []
    idx = 0
    for m in masses:
        for scale in scales:
            chunk = results[idx : idx + len(a_values)]
            idx += len(a_values)
            flags = [r["status"] == "completed" for r in chunk]
            # monotone: once completed at some A, completed at all larger A
            first_true = flags.index(True) if True in flags else len(flags)
            if not all(flags[first_true:]):
                warnings.append(
                    {"mass": m, "omega_scale": str(scale), "flags": flags}
                )
    _write_json(
        out / "summary.json",
        {
            "cells": results,
            "monotone_in_a": not warnings,
            "monotonicity_warnings": warnings,
        },
    )
    return EXIT_OK


# -- blowup ---------------------------------------------------------------------


def _blowup_on_arm(cfg: ScenarioConfig, a_on: float, out: Path):
    grid = make_grid(cfg.grid)
    table = cfg.extra
    n0, _, _ = cfg.initial.build(grid, a_on)
    scale = table.get("omega_scale", "A^-3/4")
    if isinstance(scale, str):
        if scale not in ("A^-3/4", "a^-3/4"):
            raise ConfigError("blowup.omega_scale must be a number or 'A^-3/4'")
        scale = "a_threshold"
    omega_norm = resolve_scale(scale, a_on)
    w0 = ModeProduct(
        kx=(1,), y_width=float(table.get("omega_y_width", 1.0)), x_norm=omega_norm
    ).build(grid)
    lam = lambda_a(a_on)
    horizon = lam ** (-0.25)
    if "horizon_on" in table:
        horizon = min(horizon, float(table["horizon_on"]))
    params = cfg.build_params(
        initial_linf=float(np.max(np.abs(n0))), a=a_on, horizon=horizon
    )
    return _simulate_once(
        grid, params, n0, w0, out, terms=Terms(), diag_cadence=cfg.diag_cadence
    )


def _blowup_off_arm(cfg: ScenarioConfig, out: Path):
    grid = make_grid(cfg.grid)
    table = cfg.extra
    n0, _, _ = cfg.initial.build(grid, a=1.0)
    horizon = float(table.get("horizon_off", 10.0))
    params = cfg.build_params(
        initial_linf=float(np.max(np.abs(n0))), a=1.0, horizon=horizon
    )
    terms = Terms(shear=False, vorticity=False)
    return _simulate_once(
        grid,
        params,
        n0,
        np.zeros((grid.nx, grid.ny)),
        out,
        terms=terms,
        diag_cadence=cfg.diag_cadence,
        bootstrap=False,
        negativity_tol=float(table.get("off_negativity_tol", 1.0)),
    )


def _on_arm_success(outcome, collector, growth_cap: float) -> bool:
    if outcome.status != "completed":
        return False
    linf_series = collector.series.column("linf_n")
    growth = float(np.max(linf_series) / linf_series[0]) if linf_series[0] > 0 else 0.0
    bootstrap_ok = collector.monitor.report().all_satisfied
    return growth <= growth_cap and bootstrap_ok


def run_blowup(cfg: ScenarioConfig, out: Path) -> int:
    out.mkdir(parents=True, exist_ok=True)
    table = cfg.extra
    growth_cap = float(table.get("growth_cap", 4.0))

    off_outcome, off_collector = _blowup_off_arm(cfg, out / "flow_off")
    off_linf = off_collector.series.column("linf_n")
    off_growth = float(np.max(off_linf) / off_linf[0]) if off_linf[0] > 0 else 0.0

    bisect_result = None
    if table.get("bisect", False):
        a_lo = float(table.get("a_min", 50.0))
        a_hi = float(table.get("a_max", 5000.0))
        iters = int(table.get("bisect_iters", 8))
        probe_dirs = out / "bisect"

        def probe(a):
            outcome, collector = _blowup_on_arm(cfg, a, probe_dirs / f"A_{a:g}")
            return _on_arm_success(outcome, collector, growth_cap)

        if not probe(a_hi):
            bisect_result = {"found": None, "a_max_failed": a_hi}
            a_on = float(table.get("a_on", a_hi))
        else:
            lo, hi = a_lo, a_hi
            if probe(lo):
                hi = lo
            else:
                for _ in range(iters):
                    mid = math.sqrt(lo * hi)
                    if probe(mid):
                        hi = mid
                    else:
                        lo = mid
            bisect_result = {"found": hi, "a_min": a_lo, "a_max": a_hi}
            a_on = hi
    else:
        if "a_on" not in table:
            raise ConfigError("blowup.a_on is required when bisect is disabled")
        a_on = float(table["a_on"])

    on_outcome, on_collector = _blowup_on_arm(cfg, a_on, out / "flow_on")
    on_linf = on_collector.series.column("linf_n")
    on_growth = float(np.max(on_linf) / on_linf[0]) if on_linf[0] > 0 else 0.0

    comparison = {
        "flow_off": {
            "outcome": _outcome_dict(off_outcome),
            "growth_factor": off_growth,
            "blew_up": off_outcome.status in ("blowup", "dt_collapse"),
        },
        "flow_on": {
            "a": a_on,
            "outcome": _outcome_dict(on_outcome),
            "growth_factor": on_growth,
            "bootstrap_all_satisfied": on_collector.monitor.report().all_satisfied,
            "suppressed": _on_arm_success(on_outcome, on_collector, growth_cap),
        },
        "bisect": bisect_result,
        "dichotomy_observed": (
            off_outcome.status in ("blowup", "dt_collapse")
            and _on_arm_success(on_outcome, on_collector, growth_cap)
        ),
    }
    _write_json(out / "comparison.json", comparison)
    if off_outcome.status == "aborted" or on_outcome.status == "aborted":
        return EXIT_NUMERICAL
    return EXIT_OK


# -- verify ---------------------------------------------------------------------


def _band_field(grid: Grid, coeffs: np.ndarray, y_width: float) -> np.ndarray:
    """Embed band coefficients (shape (2 kmax + 1, lmax + 1)) and apply a
    Gaussian y envelope; resolution-independent for fixed coefficients."""
    kmax = (coeffs.shape[0] - 1) // 2
    lmax = coeffs.shape[1] - 1
    hat = np.zeros((grid.nx, grid.nyr), dtype=complex)
    for i, k in enumerate(range(-kmax, kmax + 1)):
        hat[k % grid.nx, : lmax + 1] = coeffs[i]
    field = grid.to_physical(hat)
    envelope = np.exp(-(grid.y_row**2) / (2.0 * y_width**2))
    return field * envelope


def _corpus(grid: Grid, rng, size: int, kx_max: int, ky_max: int, y_width: float):
    for _ in range(size):
        coeffs = rng.standard_normal((2 * kx_max + 1, ky_max + 1)) + 1j * rng.standard_normal(
            (2 * kx_max + 1, ky_max + 1)
        )
        yield _band_field(grid, coeffs, y_width)


def _verify_corpus_margins(grid: Grid, rng, size, kx_max, ky_max, y_width, thetas):
    chain_margins = {}
    commutator_margins = {}
    relation_residuals = []
    aniso_ratios = {theta: [] for theta in thetas}

    for sample in _corpus(grid, rng, size, kx_max, ky_max, y_width):
        n0 = sample.mean(axis=0, keepdims=True) * np.ones((grid.nx, 1))
        nq = project_nonzero(grid, sample)
        for margin in diag.verify_elliptic_zero_mode(grid, n0):
            chain_margins.setdefault(margin.name, []).append(margin.margin)
        for margin in diag.verify_elliptic_nonzero_mode(grid, nq):
            chain_margins.setdefault(margin.name, []).append(margin.margin)
        for margin in diag.verify_commutator(grid, nq):
            commutator_margins.setdefault(margin.name, []).append(margin.margin)
        relation_residuals.append(diag.verify_commutator_relation(grid, nq))
        for theta in thetas:
            aniso_ratios[theta].append(diag.verify_aniso_sobolev(grid, nq, theta).ratio)

    return {
        "chain_min_margins": {k: min(v) for k, v in chain_margins.items()},
        "commutator_min_margins": {k: min(v) for k, v in commutator_margins.items()},
        "relation_max_residual": max(relation_residuals),
        "aniso_max_ratio": {str(t): max(v) for t, v in aniso_ratios.items()},
    }


def run_verify(cfg: ScenarioConfig, out: Path) -> int:
    out.mkdir(parents=True, exist_ok=True)
    table = cfg.extra
    size = int(table.get("corpus_size", 100))
    kx_max = int(table.get("kx_max", 8))
    ky_max = int(table.get("ky_max", 8))
    y_width = float(table.get("y_width", 1.5))
    thetas = [float(t) for t in table.get("thetas", [0.5, 1.0])]

    grid = make_grid(cfg.grid)
    rng = np.random.default_rng(cfg.seed)
    report = _verify_corpus_margins(grid, rng, size, kx_max, ky_max, y_width, thetas)

    if table.get("resolution_study", False):
        doubled = GridSpec(
            nx=cfg.grid.nx * 2,
            ny=cfg.grid.ny * 2,
            ly=cfg.grid.ly,
            dealias_fraction=cfg.grid.dealias_fraction,
        )
        rng2 = np.random.default_rng(cfg.seed)
        fine = _verify_corpus_margins(
            make_grid(doubled), rng2, size, kx_max, ky_max, y_width, thetas
        )
        report["resolution_study"] = {
            "aniso_max_ratio_fine": fine["aniso_max_ratio"],
            "aniso_ratio_drift": {
                t: fine["aniso_max_ratio"][t] / report["aniso_max_ratio"][t]
                for t in report["aniso_max_ratio"]
            },
        }

    chains_ok = all(m >= -1e-8 for m in report["chain_min_margins"].values())
    commutator_ok = all(m >= -1e-8 for m in report["commutator_min_margins"].values())
    relation_ok = report["relation_max_residual"] <= 1e-6
    report["passed"] = {
        "elliptic_chains": chains_ok,
        "commutator_bounds": commutator_ok,
        "commutator_relation": relation_ok,
    }
    _write_json(out / "margins.json", report)
    return EXIT_OK if (chains_ok and commutator_ok and relation_ok) else EXIT_NUMERICAL


# -- dispatch ---------------------------------------------------------------------


def run(cfg: ScenarioConfig, out_dir=None, threads: int | None = None) -> int:
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    threads = cfg.threads if threads is None else threads
    if cfg.kind == "simulate":
        return run_simulate(cfg, out)
    if cfg.kind == "semigroup":
        return run_semigroup(cfg, out, threads)
    if cfg.kind == "sweep":
        return run_sweep(cfg, out, threads)
    if cfg.kind == "blowup":
        return run_blowup(cfg, out)
    if cfg.kind == "verify":
        return run_verify(cfg, out)
    raise ConfigError(f"unknown kind {cfg.kind!r}")
