import subprocess
import sys

import numpy as np
import pytest

from doubleres import __version__
from doubleres.cli import EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC, EXIT_OK, main, reproduce
from doubleres.csvio import CsvSheet, read_csv, write_csv
from doubleres.fitlab import gaussian_derivative, saturation_curve
from doubleres.tasks import bundled_table

SMALL_MAP = """
[scenario]
seed = 3
[mw.mode]
kappa_int = "50 MHz"
kappa_ext = "50 MHz"
[scan]
b_start = "75.29 mT"
b_stop = "75.49 mT"
b_step = "0.05 mT"
nu_start = "12.145 GHz"
nu_stop = "12.165 GHz"
nu_step = "5 MHz"
"""

SMALL_EPR = """
[scenario]
seed = 9
[spin]
n_packets = 1024
[scan]
b_start = "74.2 mT"
b_stop = "76.6 mT"
b_step = "0.02 mT"
"""


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_version(capsys):
    assert main(["--version"]) == EXIT_OK
    assert __version__ in capsys.readouterr().out


def test_console_script_entry_point():
    res = subprocess.run([sys.executable, "-m", "doubleres.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "reproduce" in res.stdout


def test_usage_errors_exit_2(tmp_path):
    assert main([]) == EXIT_CONFIG
    assert main(["simulate", "no-such-task", "--config", "x", "--out", "y"]) == EXIT_CONFIG
    bad = write(tmp_path, "bad.cfg", "[drive]\npower = \"5 MHz\"\n")
    assert main(["simulate", "epr-sweep", "--config", bad, "--out", str(tmp_path / "o.csv")]) == EXIT_CONFIG
    assert main(["analyze", "fsr", "--in", write(tmp_path, "t.csv", bundled_table()),
                 "--radius", "2.1 GHz"]) == EXIT_CONFIG
    sheet = write(tmp_path, "s.csv", "a(Hz),b(Hz)\n1,2\n2,3\n3,4\n")
    assert main(["fit", "--model", "saturation", "--in", sheet, "--out", str(tmp_path / "f.csv"),
                 "--x", "nope"]) == EXIT_CONFIG


def test_io_errors_exit_4(tmp_path):
    assert main(["analyze", "fsr", "--in", str(tmp_path / "missing.csv"), "--radius", "2.1 mm"]) == EXIT_IO
    garbage = write(tmp_path, "g.csv", "a(Hz),b(Hz)\n1,2,3\n")
    assert main(["fit", "--model", "saturation", "--in", garbage, "--out", str(tmp_path / "f.csv")]) == EXIT_IO
    cfg = write(tmp_path, "c.cfg", "")
    assert main(["simulate", "fsr-analysis", "--config", cfg,
                 "--out", str(tmp_path / "no" / "dir" / "o.csv")]) == EXIT_IO


def test_numeric_failure_exit_3(tmp_path):
    x = np.linspace(0.5, 3, 50)
    half = CsvSheet([("detuning", "Hz"), ("pull", "Hz")], np.column_stack([x, gaussian_derivative(x, 1, 0, 1, 0)]))
    src = write(tmp_path, "half.csv", write_csv(half))
    assert main(["fit", "--model", "gaussian-derivative", "--in", src, "--out", str(tmp_path / "f.csv")]) == EXIT_NUMERIC


def test_analyze_fsr(tmp_path, capsys):
    src = write(tmp_path, "t.csv", bundled_table())
    assert main(["analyze", "fsr", "--in", src, "--radius", "2.1 mm"]) == EXIT_OK
    sheet = read_csv(capsys.readouterr().out)
    row = list(sheet.column("mode_offset")).index(0)
    assert sheet.column("beta2_fs2_per_m")[row] == pytest.approx(-4.57e9, rel=2e-3)
    out = tmp_path / "gvd.csv"
    assert main(["analyze", "fsr", "--in", src, "--radius", "2.1 mm", "--out", str(out)]) == EXIT_OK
    assert read_csv(out.read_text()).meta["radius"] == "2.1 mm"


def test_simulate_fsr_task_bundled_table(tmp_path):
    out = tmp_path / "o.csv"
    assert main(["simulate", "fsr-analysis", "--config", write(tmp_path, "c.cfg", ""),
                 "--out", str(out)]) == EXIT_OK
    sheet = read_csv(out.read_text())
    row = list(sheet.column("mode_offset")).index(0)
    assert sheet.column("beta2_fs2_per_m")[row] == pytest.approx(-4.57e9, rel=2e-3)


def test_fit_saturation_round_trip(tmp_path):
    p = 1e-3 * 10 ** (np.linspace(-20, 20, 17) / 10)
    pdbm = 10 * np.log10(p / 1e-3)
    sheet = CsvSheet([("power", "dBm"), ("shift", "kHz")],
                     np.column_stack([pdbm, saturation_curve(p, 4.0, 1e-3 * 10 ** 0.382)]))
    out = tmp_path / "fit.csv"
    assert main(["fit", "--model", "saturation", "--in", write(tmp_path, "s.csv", write_csv(sheet)),
                 "--out", str(out)]) == EXIT_OK
    res = read_csv(out.read_text())
    assert res.column("p_sat_dbm")[0] == pytest.approx(3.82, abs=1e-6)
    assert res.column("dnu_max")[0] == pytest.approx(4e3, rel=1e-8)
    assert dict(res.columns)["dnu_max"] == "Hz" and res.meta["fit"] == "saturation"


def test_odmr_map_deterministic_across_jobs(tmp_path):
    cfg = write(tmp_path, "m.cfg", SMALL_MAP)
    outs = []
    for jobs in ("1", "3"):
        csv, svg = tmp_path / f"m{jobs}.csv", tmp_path / f"m{jobs}.svg"
        assert main(["simulate", "odmr-map", "--config", cfg, "--out", str(csv), "--svg", str(svg),
                     "--jobs", jobs]) == EXIT_OK
        outs.append((csv.read_bytes(), svg.read_bytes()))
    assert outs[0] == outs[1]
    assert b"# seed: 3" in outs[0][0]


def test_odmr_map_zero_depth_is_all_zero(tmp_path):
    cfg = write(tmp_path, "m.cfg", SMALL_MAP + "[drive]\ndepth = 0\n")
    out = tmp_path / "m.csv"
    assert main(["simulate", "odmr-map", "--config", cfg, "--out", str(out)]) == EXIT_OK
    assert np.all(read_csv(out.read_text()).column("odmr_amplitude") == 0.0)


def test_seed_override(tmp_path):
    cfg = write(tmp_path, "e.cfg", SMALL_EPR)
    data = {}
    for tag, extra in (("a", []), ("b", ["--seed", "9"]), ("c", ["--seed", "10"])):
        out = tmp_path / f"{tag}.csv"
        assert main(["simulate", "epr-sweep", "--config", cfg, "--out", str(out)] + extra) == EXIT_OK
        data[tag] = out.read_bytes()
    assert data["a"] == data["b"]
    assert data["a"] != data["c"] and b"# seed: 10" in data["c"]


def test_epr_sweep_then_fit(tmp_path, capsys):
    cfg = write(tmp_path, "e.cfg", SMALL_EPR)
    sweep, fit = tmp_path / "e.csv", tmp_path / "f.csv"
    assert main(["simulate", "epr-sweep", "--config", cfg, "--out", str(sweep)]) == EXIT_OK
    assert main(["fit", "--model", "gaussian-derivative", "--in", str(sweep), "--out", str(fit)]) == EXIT_OK
    res = read_csv(fit.read_text())
    assert res.column("converged")[0] == 1.0
    assert abs(res.column("center")[0]) < 3e6
    assert dict(res.columns)["fwhm"] == "Hz"
    assert res.meta["task"] == "epr-sweep"


def test_reproduce_fast_figure(tmp_path, capsys):
    assert main(["reproduce", "fig3b", "--outdir", str(tmp_path)]) == EXIT_OK
    printed = capsys.readouterr().out.split()
    names = sorted(p.split("/")[-1] for p in printed)
    assert names == ["fig3b.csv", "fig3b.svg", "fig3b_fit.csv"]
    again = reproduce("fig3b", tmp_path / "again")
    assert [p.read_bytes() for p in again] == [(tmp_path / p.name).read_bytes() for p in again]
    assert main(["reproduce", "fig9", "--outdir", str(tmp_path)]) == EXIT_CONFIG
