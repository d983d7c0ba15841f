"""
Scenario configuration: a single TOML file fully determines a run.

Unknown keys are hard errors (silent typos in experiment configs are the
dominant failure mode).  Times are in the rescaled units of the coupled
system; the unrescaled conversion is t_physical = t / A.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib as toml_loader
else:
    import tomli as toml_loader

from .dynamics import PhysParams
from .fields import ScalarField
from .grid import Grid, GridSpec
from .snapshot import read_snapshot

KINDS = ("simulate", "semigroup", "sweep", "blowup", "verify")


class ConfigError(ValueError):
    """Malformed configuration; message names the offending key."""


def _require(table: dict, key: str, where: str):
    if key not in table:
        raise ConfigError(f"missing required key '{where}.{key}'")
    return table[key]


def _check_keys(table: dict, allowed, where: str):
    unknown = set(table) - set(allowed)
    if unknown:
        raise ConfigError(
            f"unknown key(s) in [{where}]: {', '.join(sorted(unknown))}"
        )


def _as_float(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"'{where}' must be a number, got {value!r}")
    return float(value)


def _as_int(value, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"'{where}' must be an integer, got {value!r}")
    return value


# -- initial data recipes ------------------------------------------------------


@dataclass(frozen=True)
class GaussianBlob:
    """Smooth periodic bump normalized to a prescribed total mass."""

    mass: float
    center_y: float = 0.0
    width: float = 0.5

    def build(self, grid: Grid) -> np.ndarray:
        # periodic in x via a von Mises profile; Gaussian in y
        xprof = np.exp((np.cos(grid.x - np.pi) - 1.0) / self.width**2)[:, None]
        yprof = np.exp(-((grid.y_row - self.center_y) ** 2) / (2.0 * self.width**2))
        raw = xprof * yprof
        raw_mass = float(np.sum(raw)) * grid.cell_area
        return raw * (self.mass / raw_mass)


@dataclass(frozen=True)
class ModeProduct:
    """Sum of sin(k x) modes times a Gaussian y profile, scaled in X norm."""

    kx: tuple = (1,)
    y_width: float = 1.0
    center_y: float = 0.0
    x_norm: float | None = None
    amplitude: float = 1.0

    def build(self, grid: Grid) -> np.ndarray:
        xpart = sum(np.sin(k * grid.x) for k in self.kx)[:, None]
        yprof = np.exp(-((grid.y_row - self.center_y) ** 2) / (2.0 * self.y_width**2))
        raw = self.amplitude * xpart * yprof
        if self.x_norm is not None:
            sq = (np.sum(raw * raw) + np.sum((grid.y_row * raw) ** 2)) * grid.cell_area
            current = math.sqrt(sq)
            if current == 0.0:
                raise ConfigError("mode_product recipe produced a zero field")
            raw = raw * (self.x_norm / current)
        return raw


@dataclass(frozen=True)
class FromSnapshot:
    path: str

    def load(self, grid: Grid):
        snap = read_snapshot(self.path)
        if (snap.nx, snap.ny) != (grid.nx, grid.ny) or not np.isclose(snap.ly, grid.ly):
            raise ConfigError(
                f"snapshot grid ({snap.nx}x{snap.ny}, ly={snap.ly}) does not match "
                f"config grid ({grid.nx}x{grid.ny}, ly={grid.ly})"
            )
        return snap


_A_THRESHOLD_STRINGS = ("A^-3/4", "a^-3/4")


def _parse_scale(value, where: str):
    """An absolute number, or the string 'A^-3/4' resolved against params.a."""
    if isinstance(value, str):
        if value in _A_THRESHOLD_STRINGS:
            return "a_threshold"
        raise ConfigError(
            f"'{where}' must be a number or 'A^-3/4', got {value!r}"
        )
    return _as_float(value, where)


def resolve_scale(scale, a: float) -> float:
    if scale == "a_threshold" or scale in _A_THRESHOLD_STRINGS:
        return a ** (-0.75)
    if isinstance(scale, str):
        raise ConfigError(f"scale must be a number or 'A^-3/4', got {scale!r}")
    return float(scale)


def _parse_recipe(table: dict, where: str):
    recipe = _require(table, "recipe", where)
    if recipe == "gaussian_blob":
        _check_keys(table, ("recipe", "mass", "center_y", "width"), where)
        mass = _as_float(_require(table, "mass", where), f"{where}.mass")
        if mass <= 0:
            raise ConfigError(f"'{where}.mass' must be positive")
        return GaussianBlob(
            mass=mass,
            center_y=_as_float(table.get("center_y", 0.0), f"{where}.center_y"),
            width=_as_float(table.get("width", 0.5), f"{where}.width"),
        )
    if recipe == "mode_product":
        _check_keys(
            table, ("recipe", "kx", "y_width", "center_y", "x_norm", "amplitude"), where
        )
        kx = table.get("kx", [1])
        if not isinstance(kx, list) or not kx or not all(
            isinstance(k, int) and k != 0 for k in kx
        ):
            raise ConfigError(f"'{where}.kx' must be a non-empty list of nonzero integers")
        x_norm = table.get("x_norm")
        return ModeProduct(
            kx=tuple(kx),
            y_width=_as_float(table.get("y_width", 1.0), f"{where}.y_width"),
            center_y=_as_float(table.get("center_y", 0.0), f"{where}.center_y"),
            x_norm=None if x_norm is None else _parse_scale(x_norm, f"{where}.x_norm"),
            amplitude=_as_float(table.get("amplitude", 1.0), f"{where}.amplitude"),
        )
    if recipe == "zero":
        _check_keys(table, ("recipe",), where)
        return None
    raise ConfigError(
        f"'{where}.recipe' must be gaussian_blob, mode_product or zero, got {recipe!r}"
    )


@dataclass
class InitialData:
    n_recipe: object = None
    omega_recipe: object = None
    snapshot: FromSnapshot | None = None

    def build(self, grid: Grid, a: float):
        if self.snapshot is not None:
            snap = self.snapshot.load(grid)
            return snap.n, snap.omega, snap.t
        n = np.zeros((grid.nx, grid.ny)) if self.n_recipe is None else self.n_recipe.build(grid)
        if self.omega_recipe is None:
            w = np.zeros((grid.nx, grid.ny))
        else:
            recipe = self.omega_recipe
            if isinstance(recipe, ModeProduct) and recipe.x_norm == "a_threshold":
                recipe = ModeProduct(
                    kx=recipe.kx,
                    y_width=recipe.y_width,
                    center_y=recipe.center_y,
                    x_norm=resolve_scale("a_threshold", a),
                    amplitude=recipe.amplitude,
                )
            w = recipe.build(grid)
        return n, w, 0.0


# -- the scenario configuration --------------------------------------------------


@dataclass
class ScenarioConfig:
    kind: str
    grid: GridSpec
    seed: int = 0
    output_dir: str = "out"
    diag_cadence: float = 0.05
    snapshot_cadence: float = 0.0
    threads: int = 1
    params_table: dict = field(default_factory=dict)
    initial: InitialData = field(default_factory=InitialData)
    extra: dict = field(default_factory=dict)  # kind-specific table

    # -- params resolution ----------------------------------------------------

    def a_value(self) -> float:
        return _as_float(_require(self.params_table, "a", "params"), "params.a")

    def default_horizon(self, a: float) -> float:
        lam = 1.0 / (math.sqrt(a) * math.log(a)) if a > math.e else None
        if lam is None:
            raise ConfigError(
                "params.horizon is required when a <= e (no enhanced-dissipation "
                "time scale to default to)"
            )
        return lam ** (-0.25)

    def build_params(
        self,
        initial_linf: float = 0.0,
        a: float | None = None,
        horizon: float | None = None,
    ) -> PhysParams:
        t = self.params_table
        a = self.a_value() if a is None else a
        if horizon is None:
            horizon = t.get("horizon")
            horizon = (
                self.default_horizon(a)
                if horizon is None
                else _as_float(horizon, "params.horizon")
            )
        if "linf_cap" in t:
            cap = _as_float(t["linf_cap"], "params.linf_cap")
        else:
            factor = _as_float(t.get("linf_cap_factor", 1e4), "params.linf_cap_factor")
            cap = factor * initial_linf if initial_linf > 0 else math.inf
        try:
            return PhysParams(
                a=a,
                horizon=horizon,
                eps0=_as_float(t.get("eps0", 0.1), "params.eps0"),
                c0_semigroup=_as_float(t.get("c0_semigroup", 5.0), "params.c0_semigroup"),
                linf_cap=cap,
                dt_min=_as_float(t.get("dt_min", 1e-9), "params.dt_min"),
                cfl=_as_float(t.get("cfl", 0.4), "params.cfl"),
            )
        except ValueError as exc:
            raise ConfigError(f"invalid [params]: {exc}") from exc

    def derived_quantities(self) -> dict:
        """The quantities --dry-run prints."""
        a = self.a_value()
        out = {"a": a}
        if a > math.e:
            lam = 1.0 / (math.sqrt(a) * math.log(a))
            out["lambda_a"] = lam
            out["a^-3/4"] = a ** (-0.75)
            out["default_horizon (lambda_a^-1/4)"] = lam ** (-0.25)
        return out


_TOP_KEYS = (
    "kind",
    "seed",
    "output_dir",
    "diag_cadence",
    "snapshot_cadence",
    "threads",
    "grid",
    "params",
    "initial",
    "semigroup",
    "sweep",
    "blowup",
    "verify",
)

_PARAM_KEYS = (
    "a",
    "horizon",
    "eps0",
    "c0_semigroup",
    "linf_cap",
    "linf_cap_factor",
    "dt_min",
    "cfl",
)


def _parse_grid(table: dict) -> GridSpec:
    _check_keys(table, ("nx", "ny", "ly", "dealias_fraction"), "grid")
    try:
        return GridSpec(
            nx=_as_int(_require(table, "nx", "grid"), "grid.nx"),
            ny=_as_int(_require(table, "ny", "grid"), "grid.ny"),
            ly=_as_float(_require(table, "ly", "grid"), "grid.ly"),
            dealias_fraction=_as_float(
                table.get("dealias_fraction", 2.0 / 3.0), "grid.dealias_fraction"
            ),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid [grid]: {exc}") from exc


def _parse_initial(table: dict) -> InitialData:
    _check_keys(table, ("n", "omega", "snapshot"), "initial")
    if "snapshot" in table:
        if "n" in table or "omega" in table:
            raise ConfigError("[initial] snapshot excludes separate n/omega recipes")
        return InitialData(snapshot=FromSnapshot(str(table["snapshot"])))
    init = InitialData()
    if "n" in table:
        init.n_recipe = _parse_recipe(table["n"], "initial.n")
    if "omega" in table:
        init.omega_recipe = _parse_recipe(table["omega"], "initial.omega")
    return init


def parse_config(text: str) -> ScenarioConfig:
    try:
        data = toml_loader.loads(text)
    except toml_loader.TOMLDecodeError as exc:
        raise ConfigError(f"TOML parse error: {exc}") from exc

    _check_keys(data, _TOP_KEYS, "top level")
    kind = _require(data, "kind", "top")
    if kind not in KINDS:
        raise ConfigError(f"kind must be one of {KINDS}, got {kind!r}")
    for other in set(KINDS) & set(data):
        if other != kind:
            raise ConfigError(f"table [{other}] conflicts with kind = '{kind}'")

    grid = _parse_grid(_require(data, "grid", "top"))
    params_table = dict(data.get("params", {}))
    _check_keys(params_table, _PARAM_KEYS, "params")

    cfg = ScenarioConfig(
        kind=kind,
        grid=grid,
        seed=_as_int(data.get("seed", 0), "seed"),
        output_dir=str(data.get("output_dir", "out")),
        diag_cadence=_as_float(data.get("diag_cadence", 0.05), "diag_cadence"),
        snapshot_cadence=_as_float(data.get("snapshot_cadence", 0.0), "snapshot_cadence"),
        threads=_as_int(data.get("threads", 1), "threads"),
        params_table=params_table,
        initial=_parse_initial(dict(data.get("initial", {}))),
        extra=dict(data.get(kind, {})),
    )
    _validate_extra(cfg)
    return cfg


def load_config(path) -> ScenarioConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def _validate_extra(cfg: ScenarioConfig):
    table = cfg.extra
    if cfg.kind == "semigroup":
        _check_keys(
            table,
            (
                "a_values",
                "operators",
                "horizon_factor",
                "samples",
                "data_width",
                "data_kx",
                "diffusion",
            ),
            "semigroup",
        )
        ops = table.get("operators", ["L_tilde"])
        if not all(op in ("L", "L_tilde") for op in ops):
            raise ConfigError("semigroup.operators entries must be 'L' or 'L_tilde'")
    elif cfg.kind == "sweep":
        _check_keys(
            table,
            ("a_values", "omega_scales", "masses", "horizon", "width", "omega_y_width"),
            "sweep",
        )
        for key in ("a_values", "masses"):
            if key not in table:
                raise ConfigError(f"missing required key 'sweep.{key}'")
    elif cfg.kind == "blowup":
        _check_keys(
            table,
            (
                "a_on",
                "horizon_on",
                "horizon_off",
                "omega_scale",
                "omega_y_width",
                "bisect",
                "a_min",
                "a_max",
                "bisect_iters",
                "growth_cap",
                "off_negativity_tol",
            ),
            "blowup",
        )
    elif cfg.kind == "verify":
        _check_keys(
            table,
            (
                "corpus_size",
                "kx_max",
                "ky_max",
                "y_width",
                "thetas",
                "resolution_study",
            ),
            "verify",
        )


def scaled_field(data: np.ndarray) -> ScalarField:
    return ScalarField(np.ascontiguousarray(data, dtype=float))
