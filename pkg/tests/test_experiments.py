"""Run configuration, CLI commands, CSV outputs, rate post-processing."""

import json
import os

import numpy as np
import pytest

from thinfilm import steady
from thinfilm.cli import main
from thinfilm.experiments import (
    ConfigError,
    InvariantViolation,
    ModeError,
    build_initial,
    cmd_catalog,
    cmd_evolve,
    cmd_massmap,
    cmd_rates,
    default_eps,
    massmap_table,
    parse_run_config,
    rates_exponential,
    rates_powerlaw,
    record_meta,
    record_table,
    saddle_onset,
)
from thinfilm.functionals import Params, diagnostics_sample, read_diagnostics_csv
from thinfilm.grid import make_grid, read_field_csv

TWO_PI = 2.0 * np.pi
SQRT2 = np.sqrt(2.0)

BASE_CONFIG = """\
# short uniform-film run
N = 128
n = 3
alpha = 1.0
t_end = 0.5
init = constant:1.0
dt0 = 1e-4
dt_max = 0.01
log_times = 0, 0.25, 0.5
"""


def write_config(tmp_path, text=BASE_CONFIG, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestRunConfig:
    def test_parse_round_trip(self, tmp_path):
        cfg = parse_run_config(write_config(tmp_path))
        assert cfg.N == 128 and cfg.n == 3.0 and cfg.alpha == 1.0
        assert cfg.log_times == (0.0, 0.25, 0.5)
        assert cfg.eps is None  # auto
        assert cfg.dt_min == 1e-14  # default

    @pytest.mark.parametrize("missing", ["N", "n", "alpha", "t_end", "init"])
    def test_missing_required_key_named(self, tmp_path, missing):
        lines = [l for l in BASE_CONFIG.splitlines()
                 if not l.startswith(missing + " ")]
        with pytest.raises(ConfigError, match=f"missing config key: {missing}"):
            parse_run_config(write_config(tmp_path, "\n".join(lines)))

    def test_unknown_key_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="unknown config key"):
            parse_run_config(write_config(tmp_path, BASE_CONFIG + "bogus = 1\n"))

    def test_malformed_line(self, tmp_path):
        with pytest.raises(ConfigError, match="key = value"):
            parse_run_config(write_config(tmp_path, "N 128\n"))

    def test_default_eps_scaling(self):
        assert default_eps(TWO_PI, 3.0) == pytest.approx(1e-8)
        assert default_eps(2 * TWO_PI, 3.0) == pytest.approx(8e-8)

    def test_build_initial_variants(self, tmp_path):
        cfg = parse_run_config(write_config(tmp_path))
        u = build_initial(cfg)
        assert np.all(u.values == 1.0)

        mini_cfg = BASE_CONFIG.replace("constant:1.0", f"minimizer:{TWO_PI}")
        cfg = parse_run_config(write_config(tmp_path, mini_cfg))
        u = build_initial(cfg)
        ref = steady.evaluate(steady.minimizer(1.0, TWO_PI), make_grid(128))
        assert np.array_equal(u.values, ref.values)

        bad = BASE_CONFIG.replace("constant:1.0", "bogus")
        with pytest.raises(ConfigError, match="init"):
            build_initial(parse_run_config(write_config(tmp_path, bad)))


class TestMassmap:
    def test_alpha_one(self, tmp_path):
        out = tmp_path / "mm.csv"
        table = cmd_massmap(1.0, out, num=200)
        assert np.all(np.diff(table[:, 0]) > 0)
        assert np.all(np.diff(table[:, 1]) > 0)
        assert table[-1, 0] == pytest.approx(np.pi - 1e-3)
        assert table[-1, 1] > 1e3
        text = out.read_text().splitlines()
        assert text[0] == "tau,M"
        assert len(text) == 201

    def test_alpha_two_tau_capped(self):
        table = massmap_table(2.0, num=50)
        assert table[-1, 0] < np.pi / 2

    def test_alpha_half_limit_mass(self):
        table = massmap_table(0.5, num=200)
        limit = TWO_PI / 0.75
        assert abs(table[-1, 1] - limit) <= 0.01 * limit


class TestCatalogSweep:
    def test_writes_rows_and_orders_energies(self, tmp_path):
        out = tmp_path / "cat.csv"
        sweep = cmd_catalog(SQRT2, 5.5, 8.0, out, num=6)
        text = out.read_text().splitlines()
        assert text[0].startswith("M,kind,tau1,tau2")
        assert len(text) > 7  # at least some saddle rows beyond the minimizers
        for M, states in sweep:
            assert states[0].is_minimizer

    def test_saddle_onset_location(self):
        onset = saddle_onset(SQRT2, 5.0, 8.0)
        assert 0.8 * TWO_PI <= onset <= 1.2 * TWO_PI

    def test_alpha_one_sweep_single_decreasing_branch(self, tmp_path):
        sweep = cmd_catalog(1.0, 1.0, 10.0, tmp_path / "cat1.csv", num=8)
        energies = []
        for M, states in sweep:
            assert len(states) == 1
            energies.append(states[0].energy)
        assert np.all(np.diff(energies) < 0)


class TestEvolveCommand:
    def test_outputs_and_round_trip(self, tmp_path):
        outdir = tmp_path / "out"
        record = cmd_evolve(write_config(tmp_path), outdir)
        names = sorted(os.listdir(outdir))
        assert "diagnostics.csv" in names and "meta.json" in names
        snaps = [n for n in names if n.startswith("snapshot_")]
        assert len(snaps) == 3

        meta = json.loads((outdir / "meta.json").read_text())
        data = read_diagnostics_csv(outdir / "diagnostics.csv")
        params = Params(meta["n"], meta["alpha"], meta["mass"], meta["eps"])
        g = make_grid(meta["N"])
        ref = steady.evaluate(steady.minimizer(meta["alpha"], meta["mass"]), g)
        # re-reading a snapshot and re-running diagnostics reproduces the row
        for t_key, fname in meta["snapshots"].items():
            t = float(t_key)
            u = read_field_csv(outdir / fname)
            s = diagnostics_sample(t, u, params, ref)
            i = int(np.argmin(np.abs(data["t"] - t)))
            assert abs(data["t"][i] - t) <= 1e-12
            for col, val in (("E", s.E), ("D", s.D), ("mass", s.mass),
                             ("dH1", s.dH1), ("dL2", s.dL2), ("dLinf", s.dLinf),
                             ("S_kad", float(s.S[1.5])), ("S_bf", float(s.S[1.0]))):
                assert abs(data[col][i] - val) <= 1e-12 * max(1.0, abs(val))

    def test_in_memory_table_matches_csv(self, tmp_path):
        outdir = tmp_path / "out"
        record = cmd_evolve(write_config(tmp_path), outdir)
        disk = read_diagnostics_csv(outdir / "diagnostics.csv")
        mem = record_table(record)
        for col in disk.dtype.names:
            assert np.allclose(disk[col], mem[col], rtol=0, atol=1e-14, equal_nan=True)


@pytest.fixture(scope="module")
def droplet_traj(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("droplet")
    outdir = tmp / "out"
    cfg = BASE_CONFIG.replace("t_end = 0.5", "t_end = 2.0")
    cmd_evolve(write_config(tmp, cfg), outdir)
    return outdir


@pytest.fixture(scope="module")
def film_traj(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("film")
    outdir = tmp / "out"
    cfg = ("N = 128\nn = 3\nalpha = 0.5\nt_end = 2.0\n"
           "init = constant:3.1830988618379067\n"
           "eps = 0\ndt0 = 1e-4\ndt_max = 0.01\n")
    cmd_evolve(write_config(tmp, cfg), outdir)
    return outdir


class TestRates:
    def test_powerlaw_on_droplet_trajectory(self, droplet_traj, tmp_path):
        out = tmp_path / "rates.json"
        report = cmd_rates(droplet_traj, "powerlaw", out)
        assert report.violations == 0
        assert report.K0 >= 0
        saved = json.loads(out.read_text())
        assert saved["violations"] == 0
        assert saved["mode"] == "powerlaw"

    def test_exponential_on_film_trajectory(self, film_traj):
        report = cmd_rates(film_traj, "exponential")
        meta = json.loads((film_traj / "meta.json").read_text())
        mini = steady.minimizer(0.5, meta["mass"])  # mass is 20 up to round-off
        mu = 0.75 * mini.value(np.pi) ** 3
        assert report.mu == pytest.approx(mu, rel=1e-6)
        assert report.fitted_exponent < 0
        assert report.slope_ratio == pytest.approx(
            report.fitted_exponent / (2 * report.mu), rel=1e-12)

    def test_mode_mismatch_refused_both_ways(self, droplet_traj, film_traj):
        with pytest.raises(ModeError, match="dry set"):
            cmd_rates(droplet_traj, "exponential")
        with pytest.raises(ModeError, match="strictly positive"):
            cmd_rates(film_traj, "powerlaw")

    def test_touchdown_film_reports_slope_only(self, tmp_path):
        # start at the touchdown film itself (quadratic zero at +-pi)
        outdir = tmp_path / "out"
        M_touch = TWO_PI / 0.75
        cfg = (f"N = 128\nn = 3\nalpha = 0.5\nt_end = 1.0\n"
               f"init = minimizer:{M_touch:.17g}\n"
               "dt0 = 1e-4\ndt_max = 0.01\n")
        cmd_evolve(write_config(tmp_path, cfg), outdir)
        report = cmd_rates(outdir, "powerlaw")
        assert report.violations == 0
        assert not report.lower_bound_series
        assert report.theoretical_exponent == pytest.approx(-1.0)  # -2/(2 beta - 1)
        with pytest.raises(ModeError):
            cmd_rates(outdir, "exponential")

    def test_doctored_trajectory_flags_violations(self, droplet_traj, tmp_path):
        copy = tmp_path / "doctored"
        os.makedirs(copy)
        lines = (droplet_traj / "diagnostics.csv").read_text().splitlines()
        header = lines[0].split(",")
        i_dh1 = header.index("dH1")
        out = [lines[0]]
        for line in lines[1:]:
            cols = line.split(",")
            cols[i_dh1] = f"{float(cols[i_dh1]) / 1e6:.17g}"
            out.append(",".join(cols))
        (copy / "diagnostics.csv").write_text("\n".join(out) + "\n")
        (copy / "meta.json").write_text((droplet_traj / "meta.json").read_text())
        with pytest.raises(InvariantViolation, match="violate"):
            cmd_rates(copy, "powerlaw")


class TestCli:
    def test_full_pipeline_exit_codes(self, tmp_path):
        cfg = write_config(tmp_path)
        outdir = str(tmp_path / "out")
        assert main(["evolve", "--config", str(cfg), "--outdir", outdir]) == 0
        assert main(["rates", "--traj", outdir, "--mode", "powerlaw",
                     "--out", str(tmp_path / "r.json")]) == 0
        assert main(["rates", "--traj", outdir, "--mode", "exponential"]) == 1
        assert main(["massmap", "--alpha", "1.0", "--num", "25",
                     "--out", str(tmp_path / "mm.csv")]) == 0
        assert main(["steady", "--alpha", "0.5", "--mass", "20", "--N", "64",
                     "--out", str(tmp_path / "st.csv")]) == 0
        field = read_field_csv(tmp_path / "st.csv")
        assert field.grid.N == 64

    def test_missing_config_key_exit_one(self, tmp_path):
        bad = write_config(tmp_path, "N = 128\nn = 3\nt_end = 1\ninit = constant:1\n")
        assert main(["evolve", "--config", str(bad), "--outdir", str(tmp_path / "x")]) == 1

    def test_violation_exit_two(self, tmp_path):
        # doctor a trajectory so the measured distance undercuts the bound
        cfg = write_config(tmp_path, BASE_CONFIG.replace("t_end = 0.5", "t_end = 2.0"))
        outdir = tmp_path / "out"
        assert main(["evolve", "--config", str(cfg), "--outdir", str(outdir)]) == 0
        lines = (outdir / "diagnostics.csv").read_text().splitlines()
        header = lines[0].split(",")
        i = header.index("dH1")
        doctored = [lines[0]]
        for line in lines[1:]:
            cols = line.split(",")
            cols[i] = "1e-300"
            doctored.append(",".join(cols))
        (outdir / "diagnostics.csv").write_text("\n".join(doctored) + "\n")
        assert main(["rates", "--traj", str(outdir), "--mode", "powerlaw"]) == 2

    def test_seventeen_digit_round_trip(self, tmp_path):
        out = tmp_path / "mm.csv"
        table = cmd_massmap(1.0, out, num=25)
        lines = out.read_text().splitlines()[1:]
        for (tau, M), line in zip(table, lines):
            s_tau, s_m = line.split(",")
            assert float(s_tau) == tau
            assert float(s_m) == M
