import csv
import json

import numpy as np
import pytest

from thinfilm.cli import ENV_OUTPUT_DIR, main, read_diagnostics


def write(path, text):
    path.write_text(text)
    return str(path)


CONSTANT = """
[fluid]
alpha = 1.5
[domain]
n_cells = 32
[initial]
kind = constant
value = 1.3
[solver]
t_end = 0.01
dt_initial = 1e-3
dt_max = 1e-3
[output]
snapshot_interval = 4
"""

COSINE = """
[fluid]
alpha = 1.5
[domain]
n_cells = 32
[initial]
kind = cosine
[solver]
t_end = 0.005
dt_initial = 1e-4
"""

DRAIN = """
[fluid]
alpha = 1.5
[domain]
n_cells = 32
[initial]
kind = cosine
c0 = 0.05
c1 = 0.02
[solver]
t_end = 10
dt_initial = 1e-4
touchdown_threshold = 1e-3
[forcing]
drain_rate = 0.05
"""


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


class TestRun:
    def test_constant_state(self, tmp_path):
        cfg = write(tmp_path / "c.ini", CONSTANT)
        out = tmp_path / "out"
        assert main(["-o", str(out), "run", cfg]) == 0
        snaps = sorted(out.glob("snap_*.csv"), key=lambda p: int(p.stem.split("_")[1]))
        assert [p.name for p in snaps] == ["snap_0.csv", "snap_4.csv", "snap_8.csv", "snap_10.csv"]
        first, last = read_csv(snaps[0]), read_csv(snaps[-1])
        assert first[0] == ["x", "u", "u_x", "u_xxx", "pressure"]
        u0 = np.array([float(r[1]) for r in first[1:]])
        u1 = np.array([float(r[1]) for r in last[1:]])
        assert np.abs(u1 - u0).max() <= 1e-13
        report = json.loads((out / "report.json").read_text())
        assert report["termination"] == "t_end reached" and report["exit_code"] == 0
        assert report["config"]["initial"]["value"] == 1.3
        records = read_diagnostics(out / "diagnostics.csv")
        assert len(records) == 11 and records[-1].time == 0.01

    def test_snapshot_columns(self, tmp_path):
        out = tmp_path / "out"
        assert main(["-o", str(out), "run", write(tmp_path / "c.ini", COSINE)]) == 0
        rows = np.array(read_csv(out / "snap_0.csv")[1:], dtype=float)
        x, u, ux, uxxx, p = rows.T
        np.testing.assert_allclose(u, 1 + 0.5 * np.cos(np.pi * x), rtol=1e-15)
        np.testing.assert_allclose(ux, -0.5 * np.pi * np.sin(np.pi * x), atol=2e-2)
        np.testing.assert_allclose(uxxx, 0.5 * np.pi**3 * np.sin(np.pi * x), atol=0.2)
        np.testing.assert_allclose(p, 0.5 * np.pi**2 * np.cos(np.pi * x), atol=5e-2)

    def test_touchdown(self, tmp_path):
        out = tmp_path / "out"
        assert main(["-o", str(out), "run", write(tmp_path / "d.ini", DRAIN)]) == 2
        report = json.loads((out / "report.json").read_text())
        assert report["termination"] == "touchdown"
        assert 0 < report["touchdown_time"] < 10
        assert report["final_diagnostics"]["min_height"] <= 1e-3

    def test_step_failure_exit_code(self, tmp_path):
        text = COSINE.replace("dt_initial = 1e-4", "dt_initial = 1e-4\ndt_min = 1e-4\npicard_max = 1\npicard_tol = 1e-300")
        assert main(["-o", str(tmp_path / "o"), "run", write(tmp_path / "f.ini", text)]) == 4

    def test_blowup_exit_code(self, tmp_path):
        text = COSINE.replace("[solver]", "[solver]\nblowup_norm_cap = 10")
        out = tmp_path / "o"
        assert main(["-o", str(out), "run", write(tmp_path / "b.ini", text)]) == 3
        assert json.loads((out / "report.json").read_text())["termination"] == "blow-up"

    def test_malformed_config(self, tmp_path, capsys):
        assert main(["run", write(tmp_path / "bad.ini", "[fluid]\nalpha 2\n")]) == 1
        assert "line 2" in capsys.readouterr().err

    def test_missing_config(self, tmp_path):
        assert main(["run", str(tmp_path / "nope.ini")]) == 1

    def test_usage_error(self):
        assert main(["frobnicate"]) == 1
        assert main([]) == 1

    def test_env_var_sets_output(self, tmp_path, monkeypatch):
        monkeypatch.setenv(ENV_OUTPUT_DIR, str(tmp_path / "env_out"))
        assert main(["run", write(tmp_path / "c.ini", CONSTANT)]) == 0
        assert (tmp_path / "env_out" / "report.json").exists()

    def test_deterministic_output(self, tmp_path):
        cfg = write(tmp_path / "c.ini", COSINE)
        for name in ("a", "b"):
            assert main(["-o", str(tmp_path / name), "run", cfg]) == 0
        assert (tmp_path / "a" / "diagnostics.csv").read_bytes() == (tmp_path / "b" / "diagnostics.csv").read_bytes()

    def test_diagnostics_reload_bit_for_bit(self, tmp_path):
        from thinfilm import run
        from thinfilm.config import load_config

        cfg_path = write(tmp_path / "c.ini", COSINE)
        assert main(["-o", str(tmp_path / "o"), "run", cfg_path]) == 0
        cfg = load_config(cfg_path)
        report = run(cfg.initial_state(), cfg.grid(), cfg.params(), cfg.solver)
        assert read_diagnostics(tmp_path / "o" / "diagnostics.csv") == report.records


MMS = """
[{block}]
{coeffs}
[domain]
n_cells = 16
[solver]
t_end = 0.02
[mms]
levels = 3
{extra}
"""


def mms_config(tmp_path, name, coeffs, block="fluid", extra=""):
    return write(tmp_path / f"{name}.ini", MMS.format(block=block, coeffs=coeffs, extra=extra))


class TestMMS:
    def test_alpha_two(self, tmp_path, capsys):
        out = tmp_path / "o"
        assert main(["-o", str(out), "mms", mms_config(tmp_path, "m", "alpha = 2")]) == 0
        rows = read_csv(out / "mms_orders.csv")
        assert rows[0] == ["level", "N", "dt", "max_error", "observed_order"]
        assert all(float(r[4]) >= 1.8 for r in rows[2:])
        assert "order=" in capsys.readouterr().out

    def test_newtonian_orders_independent_of_alpha(self, tmp_path):
        outputs = []
        for alpha in (1.5, 3.0):
            out = tmp_path / f"o{alpha}"
            cfg = mms_config(tmp_path, f"n{alpha}", f"a = 0.3333333333333333\nb = 0\nalpha = {alpha}",
                             block="coefficients")
            assert main(["-o", str(out), "mms", cfg]) == 0
            outputs.append((out / "mms_orders.csv").read_bytes())
        assert outputs[0] == outputs[1]

    def test_threshold_failure(self, tmp_path):
        cfg = mms_config(tmp_path, "m", "alpha = 2", extra="min_order = 5")
        assert main(["-o", str(tmp_path / "o"), "mms", cfg]) == 5

    def test_requires_mms_section(self, tmp_path):
        assert main(["-o", str(tmp_path / "o"), "mms", write(tmp_path / "c.ini", CONSTANT)]) == 1

    def test_levels_validation(self, tmp_path):
        cfg = write(tmp_path / "m.ini", "[fluid]\nalpha = 2\n[mms]\nlevels = 1\n")
        assert main(["mms", cfg]) == 1


class TestSweep:
    def test_alpha_sweep(self, tmp_path):
        out = tmp_path / "s"
        cfg = write(tmp_path / "c.ini", COSINE)
        assert main(["-o", str(out), "sweep", cfg, "--param", "alpha", "--values", "1.2,1.5,2.0,3.0"]) == 0
        subdirs = sorted(p.name for p in out.iterdir() if p.is_dir())
        assert subdirs == ["alpha_1.2", "alpha_1.5", "alpha_2", "alpha_3"]
        assert all((out / d / "report.json").exists() for d in subdirs)
        rows = read_csv(out / "sweep_summary.csv")
        assert rows[0] == ["value", "termination", "final_energy", "final_min_height"]
        assert [r[1] for r in rows[1:]] == ["t_end reached"] * 4

    def test_failing_run_is_marked(self, tmp_path):
        out = tmp_path / "s"
        cfg = write(tmp_path / "c.ini", COSINE)
        code = main(["-o", str(out), "sweep", cfg, "--param", "alpha", "--values", "1.5,0.9"])
        assert code != 0
        rows = read_csv(out / "sweep_summary.csv")
        assert rows[1][1] == "t_end reached"
        assert rows[2][1].startswith("error") and "alpha must exceed 1" in rows[2][1]

    def test_tau_star_sweep_logs_trend(self, tmp_path, capsys):
        out = tmp_path / "s"
        cfg = write(tmp_path / "c.ini", COSINE)
        assert main(["-o", str(out), "sweep", cfg, "--param", "tau_star", "--values", "4,1,0.25"]) == 0
        assert "final energy is" in capsys.readouterr().out
        energies = [float(r[2]) for r in read_csv(out / "sweep_summary.csv")[1:]]
        assert all(np.isfinite(energies))

    def test_parallel_matches_serial(self, tmp_path):
        cfg = write(tmp_path / "c.ini", COSINE)
        args = ["sweep", cfg, "--param", "amplitude", "--values", "0.1,0.3"]
        assert main(["-o", str(tmp_path / "a"), *args]) == 0
        assert main(["-o", str(tmp_path / "b"), *args, "--jobs", "2"]) == 0
        assert (tmp_path / "a" / "sweep_summary.csv").read_bytes() == (tmp_path / "b" / "sweep_summary.csv").read_bytes()

    def test_amplitude_needs_cosine(self, tmp_path):
        cfg = write(tmp_path / "c.ini", CONSTANT)
        assert main(["-o", str(tmp_path / "s"), "sweep", cfg, "--param", "amplitude", "--values", "0.1"]) == 1

    def test_bad_values(self, tmp_path):
        cfg = write(tmp_path / "c.ini", CONSTANT)
        assert main(["sweep", cfg, "--param", "alpha", "--values", "a,b"]) == 1
