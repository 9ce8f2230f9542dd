import math
import subprocess
import sys

import numpy as np
import pytest

from nscontrol.cli import EXIT_ABORT, EXIT_CONFIG, EXIT_FAIL, EXIT_OK, EXIT_SMALLNESS, PRESETS, main

SMALL_CONTROL = """
command = control
grid.N = 64
grid.L = 16*pi
time.dt = 0.1
time.T = 12.8
data.kind = dipole
data.amplitude = 0.3
data.width = 2
chi.R = 0.5
chi.Rprime = 0.5
control.max_iter = 20
gap.q = 2
"""

SMALL_SIMULATE = """
command = simulate
grid.N = 64
grid.L = 32*pi
time.dt = 0.05
time.T = 4
time.picard_times = 1, 2
data.kind = curl_gaussian
data.amplitude = 0.3
data.width = 2
fit.t0 = 1
fit.t1 = 4
"""

SMALL_PROFILE = """
command = profile-check
grid.N = 32
grid.L = 16*pi
source.R = 2
source.Rprime = 10
source.q = 1, 2
source.t0 = 0.5
source.t1 = 5
source.samples = 5
source.oversample = 1
source.breakdown = true
"""


def run(tmp_path, command, text, *extra, name="cfg.cfg"):
    cfg = tmp_path / name
    cfg.write_text(text)
    out = tmp_path / "out"
    return main([command, "--config", str(cfg), "--output", str(out), *extra]), out


def read_csv(path):
    return np.genfromtxt(path, delimiter=",", names=True)


class TestExitCodes:
    def test_invalid_grid_is_config_error(self, tmp_path, capsys):
        code, _ = run(tmp_path, "simulate", "grid.N = 100\n")
        assert code == EXIT_CONFIG
        assert "grid.N" in capsys.readouterr().err

    def test_unknown_key_is_config_error(self, tmp_path):
        assert run(tmp_path, "simulate", SMALL_SIMULATE + "data.colour = red\n")[0] == EXIT_CONFIG

    def test_chi_beyond_horizon_is_config_error(self, tmp_path):
        assert run(tmp_path, "control", SMALL_CONTROL.replace("chi.Rprime = 0.5", "chi.Rprime = 0.01"))[0] \
            == EXIT_CONFIG

    def test_cfl_abort(self, tmp_path, capsys):
        text = (SMALL_SIMULATE.replace("data.amplitude = 0.3", "data.amplitude = 50")
                .replace("time.dt = 0.05", "time.dt = 0.5").replace("picard_times = 1, 2", "picard_times = 1"))
        code, _ = run(tmp_path, "simulate", text)
        assert code == EXIT_ABORT
        assert "aborted" in capsys.readouterr().err

    def test_smallness_gate(self, tmp_path, capsys):
        code, out = run(tmp_path, "control", SMALL_CONTROL + "thresholds.hminus1 = 0.1\n")
        assert code == EXIT_SMALLNESS
        assert "hminus1" in capsys.readouterr().out
        assert not out.exists()

    def test_smallness_override(self, tmp_path):
        code, out = run(tmp_path, "control", SMALL_CONTROL + "thresholds.hminus1 = 0.1\n", "--override-smallness")
        assert code == EXIT_OK and (out / "sigma.txt").exists()

    def test_non_convergence(self, tmp_path):
        text = SMALL_CONTROL.replace("control.max_iter = 20", "control.max_iter = 1") + "control.tol = 1e-14\n"
        assert run(tmp_path, "control", text)[0] == EXIT_FAIL

    def test_parser_requires_source(self):
        with pytest.raises(SystemExit):
            main(["simulate"])


class TestOutputs:
    def test_simulate(self, tmp_path):
        code, out = run(tmp_path, "simulate", SMALL_SIMULATE)
        assert code == EXIT_OK
        for name in ("trajectory.csv", "decay.csv", "decay.txt", "picard.csv"):
            assert (out / name).exists()
        pic = read_csv(out / "picard.csv")
        assert np.all(pic["relative"] < 1e-5)
        assert (out / "trajectory.csv").read_bytes().endswith(b"\r\n")

    def test_control(self, tmp_path):
        code, out = run(tmp_path, "control", SMALL_CONTROL + "output.prefix = small_\n")
        assert code == EXIT_OK
        txt = (out / "small_sigma.txt").read_text()
        assert "sigma.max_abs" in txt
        hist = read_csv(out / "small_control_history.csv")
        assert hist["m"][-1] >= 1

    def test_profile_check(self, tmp_path):
        code, out = run(tmp_path, "profile-check", SMALL_PROFILE)
        assert code == EXIT_OK
        gap = read_csv(out / "profile_gap.csv")
        assert gap.dtype.names == ("t", "gap_q1", "gap_q2") and gap.size == 5
        assert (out / "breakdown_q2.csv").exists()

    def test_diagnose_empty_profile(self, tmp_path):
        text = SMALL_SIMULATE.replace("command = simulate", "command = diagnose") + "profile.kind = empty\n"
        code, out = run(tmp_path, "diagnose", text)
        assert code == EXIT_OK
        d = read_csv(out / "besov_dyadic.csv")
        assert np.all(d["d"] == 0)

    @pytest.mark.parametrize("p,verdict", [(1, "plateau"), (2, "c0_like")])
    def test_diagnose_presets(self, tmp_path, p, verdict):
        code, out = main(["diagnose", "--preset", f"besov_rho{p}", "--output", str(tmp_path)]), tmp_path
        assert code == EXIT_OK
        txt = next(tmp_path.glob("*besov.txt")).read_text()
        assert f"dyadic_verdict = {verdict}" in txt and f"heat_verdict = {verdict}" in txt

    def test_all_presets_listed(self):
        assert len(PRESETS) == 10


class TestReproducibility:
    def test_byte_identical_reruns(self, tmp_path):
        a = tmp_path / "a"
        b = tmp_path / "b"
        a.mkdir(), b.mkdir()
        assert run(a, "control", SMALL_CONTROL)[0] == EXIT_OK
        assert run(b, "control", SMALL_CONTROL)[0] == EXIT_OK
        for f in (a / "out").iterdir():
            assert f.read_bytes() == (b / "out" / f.name).read_bytes()

    def test_thread_count_invariance(self, tmp_path):
        a = tmp_path / "a"
        b = tmp_path / "b"
        a.mkdir(), b.mkdir()
        assert run(a, "simulate", SMALL_SIMULATE, "--threads", "1")[0] == EXIT_OK
        assert run(b, "simulate", SMALL_SIMULATE, "--threads", "4")[0] == EXIT_OK
        for f in (a / "out").iterdir():
            assert f.read_bytes() == (b / "out" / f.name).read_bytes()

    def test_seeded_noise(self, tmp_path):
        outs = []
        for i, seed in enumerate((1, 1, 2)):
            d = tmp_path / str(i)
            d.mkdir()
            assert run(d, "simulate", SMALL_SIMULATE + f"seed = {seed}\ndata.noise = 0.1\n")[0] == EXIT_OK
            outs.append((d / "out" / "trajectory.csv").read_bytes())
        assert outs[0] == outs[1] != outs[2]

    def test_console_script(self, tmp_path):
        r = subprocess.run([sys.executable, "-m", "nscontrol.cli", "--version"], capture_output=True, text=True)
        assert r.returncode == 0 and "nscontrol" in r.stdout
