import json

import numpy as np
import pytest

from pksns.cli import main as cli_main
from pksns.config import parse_config
from pksns.dynamics import PhysParams, State
from pksns.fields import norm_x
from pksns.grid import GridSpec, make_grid
from pksns.scenarios import run
from pksns.snapshot import read_snapshot
from pksns.timestepper import IntegrationControls, integrate

SIMULATE_SMALL = """
kind = "simulate"
seed = 3
diag_cadence = 0.02
[grid]
nx = 16
ny = 48
ly = 6.0
[params]
a = 50.0
horizon = 0.08
[initial.n]
recipe = "gaussian_blob"
mass = 6.0
width = 0.8
[initial.omega]
recipe = "mode_product"
kx = [1]
y_width = 1.0
x_norm = 1e-3
"""


def write_config(tmp_path, text, name="config.toml"):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestSimulateScenario:
    def test_artifacts_and_exit_code(self, tmp_path):
        cfg = parse_config(SIMULATE_SMALL)
        out = tmp_path / "run"
        code = run(cfg, out_dir=out)
        assert code == 0
        assert (out / "diagnostics.csv").exists()
        assert (out / "bootstrap.json").exists()
        assert (out / "summary.json").exists()
        assert (out / "final.snap").exists()
        summary = json.loads((out / "summary.json").read_text())
        assert summary["outcome"]["status"] == "completed"
        assert summary["mass_drift_rel"] < 1e-10

    def test_snapshot_cadence_writes_files(self, tmp_path):
        text = SIMULATE_SMALL.replace(
            "diag_cadence = 0.02", "diag_cadence = 0.02\nsnapshot_cadence = 0.04"
        )
        out = tmp_path / "snaps"
        assert run(parse_config(text), out_dir=out) == 0
        snaps = sorted(out.glob("snapshot_*.snap"))
        assert len(snaps) >= 2

    def test_zero_data_completes_with_empty_norms(self, tmp_path):
        text = SIMULATE_SMALL.replace(
            '[initial.n]\nrecipe = "gaussian_blob"\nmass = 6.0\nwidth = 0.8\n', ""
        ).replace(
            '[initial.omega]\nrecipe = "mode_product"\nkx = [1]\ny_width = 1.0\nx_norm = 1e-3\n',
            "",
        )
        cfg = parse_config(text)
        out = tmp_path / "zero"
        assert run(cfg, out_dir=out) == 0
        rows = (out / "diagnostics.csv").read_text().splitlines()
        data_rows = [r for r in rows if not r.startswith("#")][1:]
        assert data_rows
        for row in data_rows:
            cols = row.split(",")
            assert float(cols[2]) == 0.0  # mass
            assert float(cols[3]) == 0.0  # linf

    def test_reproducible_csv_bytes(self, tmp_path):
        cfg = parse_config(SIMULATE_SMALL)
        out1, out2 = tmp_path / "a", tmp_path / "b"
        run(cfg, out_dir=out1)
        run(parse_config(SIMULATE_SMALL), out_dir=out2)
        assert (out1 / "diagnostics.csv").read_bytes() == (out2 / "diagnostics.csv").read_bytes()
        assert (out1 / "bootstrap.json").read_bytes() == (out2 / "bootstrap.json").read_bytes()

    def test_restart_from_snapshot_continues_series(self, tmp_path):
        # unbroken run to 0.08 vs restart from the 0.04 snapshot; the final
        # states must agree to accumulation tolerance
        full_cfg = parse_config(SIMULATE_SMALL)
        out_full = tmp_path / "full"
        run(full_cfg, out_dir=out_full)

        half = SIMULATE_SMALL.replace("horizon = 0.08", "horizon = 0.04")
        out_half = tmp_path / "half"
        run(parse_config(half), out_dir=out_half)

        restart = f"""
kind = "simulate"
seed = 3
diag_cadence = 0.02
[grid]
nx = 16
ny = 48
ly = 6.0
[params]
a = 50.0
horizon = 0.08
[initial]
snapshot = "{(out_half / 'final.snap').as_posix()}"
"""
        out_restart = tmp_path / "restart"
        assert run(parse_config(restart), out_dir=out_restart) == 0
        s_full = read_snapshot(out_full / "final.snap")
        s_restart = read_snapshot(out_restart / "final.snap")
        assert abs(s_full.t - s_restart.t) < 1e-12
        scale = np.max(np.abs(s_full.n))
        assert np.max(np.abs(s_full.n - s_restart.n)) < 1e-10 * scale

    def test_blowup_exit_code(self, tmp_path):
        text = SIMULATE_SMALL.replace(
            "[params]\na = 50.0\nhorizon = 0.08\n",
            "[params]\na = 50.0\nhorizon = 0.08\nlinf_cap = 1e-6\n",
        )
        out = tmp_path / "blow"
        assert run(parse_config(text), out_dir=out) == 2
        summary = json.loads((out / "summary.json").read_text())
        assert summary["outcome"]["status"] == "blowup"


SEMIGROUP_SMALL = """
kind = "semigroup"
[grid]
nx = 32
ny = 96
ly = 5.0
[params]
a = 30.0
[semigroup]
a_values = [30.0]
operators = ["L_tilde", "L"]
horizon_factor = 0.6
samples = 40
"""


class TestSemigroupScenario:
    def test_cells_and_summary(self, tmp_path):
        cfg = parse_config(SEMIGROUP_SMALL)
        out = tmp_path / "semi"
        code = run(cfg, out_dir=out)
        assert code == 0
        cell = json.loads((out / "cell_A30_L_tilde.json").read_text())
        assert cell["envelope"]["passed"]
        assert cell["fit"]["rate"] > 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["all_envelopes_passed"]
        # the operator comparison is reported (never asserted fatal: the
        # nonlocal term can empirically beat the plain shear operator)
        comparison = summary["operator_comparison"]
        assert len(comparison) == 1
        assert comparison[0]["rate_L"] > 0 and comparison[0]["rate_L_tilde"] > 0
        assert "plain_operator_at_least_as_fast" in comparison[0]

    def test_csv_series_written(self, tmp_path):
        cfg = parse_config(SEMIGROUP_SMALL)
        out = tmp_path / "semi"
        run(cfg, out_dir=out)
        rows = (out / "cell_A30_L_tilde.csv").read_text().splitlines()
        data = [r for r in rows if not r.startswith("#")]
        assert data[0] == "t,x_norm"
        assert len(data) > 10


SWEEP_SMALL = """
kind = "sweep"
[grid]
nx = 16
ny = 48
ly = 4.0
[params]
a = 10.0
[sweep]
a_values = [10.0, 40.0]
masses = [5.0]
omega_scales = [0.0]
horizon = 0.05
width = 0.6
"""


class TestSweepScenario:
    def test_outcome_grid(self, tmp_path):
        cfg = parse_config(SWEEP_SMALL)
        out = tmp_path / "sweep"
        assert run(cfg, out_dir=out) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert len(summary["cells"]) == 2
        assert "monotone_in_a" in summary
        text = (out / "outcomes.csv").read_text()
        assert "completed" in text.splitlines()[3]

    def test_worker_pool_matches_serial(self, tmp_path):
        cfg = parse_config(SWEEP_SMALL)
        out1, out2 = tmp_path / "serial", tmp_path / "pool"
        run(cfg, out_dir=out1, threads=1)
        run(parse_config(SWEEP_SMALL), out_dir=out2, threads=2)
        assert (out1 / "outcomes.csv").read_bytes() == (out2 / "outcomes.csv").read_bytes()


BLOWUP_SMALL = """
kind = "blowup"
diag_cadence = 0.01
[grid]
nx = 64
ny = 192
ly = 5.0
[params]
a = 1.0
linf_cap_factor = 25.0
[initial.n]
recipe = "gaussian_blob"
mass = 31.42
width = 0.3
[blowup]
a_on = 400.0
horizon_on = 0.1
horizon_off = 1.0
growth_cap = 4.0
"""


class TestBlowupScenario:
    @pytest.mark.slow
    def test_dichotomy_pair(self, tmp_path):
        cfg = parse_config(BLOWUP_SMALL)
        out = tmp_path / "blowup"
        code = run(cfg, out_dir=out)
        comparison = json.loads((out / "comparison.json").read_text())
        assert comparison["flow_off"]["blew_up"]
        assert comparison["flow_off"]["growth_factor"] >= 20.0
        assert comparison["flow_on"]["outcome"]["status"] == "completed"
        assert code == 0


VERIFY_SMALL = """
kind = "verify"
seed = 7
[grid]
nx = 16
ny = 256
ly = 20.0
[verify]
corpus_size = 8
kx_max = 4
ky_max = 6
y_width = 1.5
thetas = [0.5]
"""


class TestVerifyScenario:
    def test_resolution_study_ratio_stable(self, tmp_path):
        text = VERIFY_SMALL.replace("thetas = [0.5]", "thetas = [0.5]\nresolution_study = true")
        text = text.replace("corpus_size = 8", "corpus_size = 4")
        out = tmp_path / "verify_rs"
        assert run(parse_config(text), out_dir=out) == 0
        margins = json.loads((out / "margins.json").read_text())
        drift = margins["resolution_study"]["aniso_ratio_drift"]["0.5"]
        assert 0.9 < drift < 1.1

    def test_margins_pass(self, tmp_path):
        cfg = parse_config(VERIFY_SMALL)
        out = tmp_path / "verify"
        code = run(cfg, out_dir=out)
        margins = json.loads((out / "margins.json").read_text())
        assert all(margins["passed"].values()), margins["passed"]
        assert code == 0
        assert all(v >= -1e-8 for v in margins["chain_min_margins"].values())
        assert margins["relation_max_residual"] <= 1e-6


class TestCli:
    def test_dry_run_prints_derived(self, tmp_path, capsys):
        path = write_config(tmp_path, SIMULATE_SMALL)
        code = cli_main(["simulate", "--config", str(path), "--dry-run"])
        out = capsys.readouterr().out
        assert code == 0
        assert "lambda_a" in out
        assert "a^-3/4" in out

    def test_config_error_exit_code(self, tmp_path):
        path = write_config(tmp_path, SIMULATE_SMALL + "\nbogus = 1\n")
        assert cli_main(["simulate", "--config", str(path)]) == 3

    def test_kind_mismatch_exit_code(self, tmp_path):
        path = write_config(tmp_path, SIMULATE_SMALL)
        assert cli_main(["sweep", "--config", str(path)]) == 3

    def test_missing_file_exit_code(self, tmp_path):
        assert cli_main(["simulate", "--config", str(tmp_path / "nope.toml")]) == 3

    def test_simulate_end_to_end(self, tmp_path):
        path = write_config(tmp_path, SIMULATE_SMALL)
        out = tmp_path / "cli_run"
        code = cli_main(["simulate", "--config", str(path), "--out", str(out)])
        assert code == 0
        assert (out / "summary.json").exists()


class TestDeterminismAcrossProcessBoundary:
    def test_norm_series_identical_for_same_config(self):
        cfg = parse_config(SIMULATE_SMALL)
        grid = make_grid(cfg.grid)

        def series():
            n0, w0, t0 = cfg.initial.build(grid, cfg.a_value())
            params = cfg.build_params(initial_linf=float(np.max(np.abs(n0))))
            values = []
            controls = IntegrationControls(
                diag_cadence=0.02,
                on_diagnostic=lambda s, dt: values.append(norm_x(grid, s.n)),
            )
            integrate(State.from_fields(grid, n0, w0, t=t0), params, controls)
            return values

        assert series() == series()


class TestSweepThresholdScale:
    def test_threshold_string_scale(self, tmp_path):
        text = SWEEP_SMALL.replace('omega_scales = [0.0]', 'omega_scales = ["A^-3/4"]')
        out = tmp_path / "sweep_thr"
        assert run(parse_config(text), out_dir=out) == 0
        summary = json.loads((out / "summary.json").read_text())
        scales = {c["a"]: c["omega_scale"] for c in summary["cells"]}
        for a, scale in scales.items():
            assert abs(scale - a ** -0.75) < 1e-12
