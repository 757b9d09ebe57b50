"""Configuration parsing, initial conditions, experiment drivers, CLI."""

import json
import os
import subprocess
import sys

import numpy as np
import pytest

from vplandau.config import load_config, parse_config
from vplandau.errors import ConfigError, InitialConditionError
from vplandau.grid import PhaseGrid, SpatialGrid, VelocityGrid, integrate_v
from vplandau.initial import make_initial_condition
from vplandau.state import ConservedQuantities, SystemState, maxwellian

MINIMAL = """
[model]
model = landau
gamma = -3.0
k = 10.0

[grid]
n_v = 16
"""


class TestParseConfig:
    def test_minimal_valid_with_defaults(self):
        cfg = parse_config(MINIMAL)
        assert cfg.model == "landau" and cfg.gamma == -3.0 and cfg.k == 10.0
        echo = cfg.echo()
        assert echo["n_x"] == 16 and echo["dt"] == 0.01  # defaults filled
        assert cfg.phase_grid().velocity.n_v == 16

    def test_gamma_out_of_range(self):
        with pytest.raises(ConfigError) as err:
            parse_config(MINIMAL.replace("-3.0", "2.0"))
        assert any("gamma range" in v for v in err.value.violations)

    def test_boltzmann_double_violation(self):
        text = """
[model]
model = boltzmann
gamma = -2.0
s = 0.4
k = 17.0
"""
        with pytest.raises(ConfigError) as err:
            parse_config(text)
        msgs = err.value.violations
        assert any("s range" in v for v in msgs)
        assert any("gamma+2s" in v for v in msgs)

    def test_k_below_k0_cited(self):
        with pytest.raises(ConfigError) as err:
            parse_config(MINIMAL.replace("k = 10.0", "k = 9.0"))
        assert any("k below k0=10" in v for v in err.value.violations)
        text = """
[model]
model = boltzmann
gamma = 0.0
s = 0.75
k = 16.0
"""
        with pytest.raises(ConfigError) as err:
            parse_config(text)
        assert any("k below k0=17" in v for v in err.value.violations)

    def test_all_violations_collected(self):
        text = """
[model]
model = landau
gamma = 5.0
k = 1.0

[grid]
n_v = 12

[time]
dt = -1.0
"""
        with pytest.raises(ConfigError) as err:
            parse_config(text)
        assert len(err.value.violations) >= 4

    def test_overrides(self):
        cfg = parse_config(MINIMAL, overrides={"time.dt": "0.5",
                                               "flags.mode": "operator_test"})
        assert cfg.dt == 0.5 and cfg.mode == "operator_test"


class TestInitialConditions:
    def test_zero_amplitude(self, small_grid):
        st = make_initial_condition(small_grid, amplitude=0.0)
        assert np.max(np.abs(st.f_plus)) == 0.0
        assert np.max(np.abs(st.phi)) == 0.0

    def test_single_mode_opposite_species(self, small_grid):
        st = make_initial_condition(small_grid, family="single_mode",
                                    amplitude=1e-3, modes=(1,),
                                    species="opposite", seed=0)
        q = ConservedQuantities.of(st)
        assert abs(q.mass_plus) <= 1e-12
        assert abs(q.mass_minus) <= 1e-12
        assert np.max(np.abs(q.momentum)) <= 1e-12
        assert abs(q.energy) <= 1e-12
        # opposite signs charge the plasma: nonzero initial potential
        assert np.max(np.abs(st.phi)) > 1e-6

    def test_random_bandlimited_deterministic(self, small_grid):
        a = make_initial_condition(small_grid, family="random_bandlimited",
                                   amplitude=1e-3, modes=(3,), seed=42)
        b = make_initial_condition(small_grid, family="random_bandlimited",
                                   amplitude=1e-3, modes=(3,), seed=42)
        assert np.array_equal(a.f_plus, b.f_plus)
        c = make_initial_condition(small_grid, family="random_bandlimited",
                                   amplitude=1e-3, modes=(3,), seed=43)
        assert not np.array_equal(a.f_plus, c.f_plus)

    def test_positivity_rescue_halves_amplitude(self, small_grid):
        with pytest.warns(RuntimeWarning):
            st = make_initial_condition(small_grid, amplitude=5.0, seed=1)
        mu = maxwellian(small_grid.velocity)
        assert float(np.min(mu + st.f_plus)) > 0.0

    def test_positivity_rescue_gives_up(self, small_grid):
        with pytest.raises(InitialConditionError), pytest.warns(RuntimeWarning):
            make_initial_condition(small_grid, amplitude=1e9, seed=1,
                                   max_halvings=3)

    def test_two_mode_family(self, small_grid):
        st = make_initial_condition(small_grid, family="two_mode",
                                    amplitude=1e-3, modes=(1, 2), seed=0)
        q = ConservedQuantities.of(st)
        assert abs(q.energy) <= 1e-12


class TestExperimentDrivers:
    def test_operator_test_mode(self, tmp_path):
        text = MINIMAL + f"""
[flags]
mode = operator_test

[output]
directory = {tmp_path}
"""
        from vplandau.experiments import run_experiment

        cfg = parse_config(text)
        summary, passed = run_experiment(cfg)
        assert passed
        assert summary["fft_oracle_max_rel_error"] <= 1e-8
        assert summary["weight_suite"]["failed"] == 0
        assert summary["corrupted_r_floor_failures"] > 0
        assert (tmp_path / "summary.json").exists()
        payload = json.loads((tmp_path / "summary.json").read_text())
        assert payload["schema_version"] == 1

    def test_nonlinear_short_run(self, tmp_path):
        text = f"""
[model]
model = landau
gamma = -3.0
k = 10.0

[grid]
n_x = 8
n_v = 16

[time]
dt = 0.005
t_final = 0.02

[output]
directory = {tmp_path}
record_every = 1
checkpoint_every = 2

[initial]
amplitude = 1e-4
"""
        from vplandau.experiments import run_experiment

        cfg = parse_config(text)
        summary, passed = run_experiment(cfg)
        assert summary["conservation"]["max_relative_drift"] <= 1e-8
        assert (tmp_path / "series.csv").exists()
        assert (tmp_path / "checkpoint_000002.npz").exists()
        # positivity is monitored, never asserted (mu underflows FFT noise
        # at the box corners); the monitor must be recorded and finite
        assert np.isfinite(summary["min_full_distribution"])


class TestCLI:
    def _run(self, *args, env=None):
        full_env = dict(os.environ)
        if env:
            full_env.update(env)
        return subprocess.run(
            [sys.executable, "-m", "vplandau.cli", *args],
            capture_output=True, text=True, env=full_env)

    def test_bad_config_exit_2_with_violations(self, tmp_path):
        bad = tmp_path / "bad.ini"
        bad.write_text(MINIMAL.replace("-3.0", "9.0"))
        proc = self._run("run", str(bad))
        assert proc.returncode == 2
        payload = json.loads(proc.stderr)
        assert payload["error"] == "config"
        assert any("gamma range" in v for v in payload["violations"])

    def test_operator_test_cli(self, tmp_path):
        ini = tmp_path / "ok.ini"
        ini.write_text(MINIMAL + f"\n[output]\ndirectory = {tmp_path}\n")
        proc = self._run("operator-test", str(ini))
        assert proc.returncode == 0, proc.stderr
        payload = json.loads(proc.stdout)
        assert payload["passed"] is True

    def test_fit_subcommand(self, tmp_path):
        csv = tmp_path / "series.csv"
        from vplandau.diagnostics import CSV_COLUMNS

        t = np.linspace(0, 5, 100)
        e = np.exp(-2 * t)
        rows = [",".join(CSV_COLUMNS)]
        for ti, ei in zip(t, e):
            vals = {c: "0.0" for c in CSV_COLUMNS}
            vals["time"] = repr(float(ti))
            vals["e_k"] = repr(float(ei))
            vals["picard_iterations"] = "0"
            rows.append(",".join(vals[c] for c in CSV_COLUMNS))
        csv.write_text("\n".join(rows) + "\n")
        proc = self._run("fit", str(csv), "--mode", "exponential")
        assert proc.returncode == 0, proc.stderr
        fit = json.loads(proc.stdout)
        assert fit["rate"] == pytest.approx(2.0, abs=1e-6)
