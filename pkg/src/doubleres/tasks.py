"""Scenario tasks: simulate, add noise, and package the result as a CSV sheet."""

from __future__ import annotations

import importlib.resources
import warnings
from dataclasses import dataclass

import numpy as np

from .cavity import CoarseGridWarning, anticrossing_map
from .config import Scenario, parse_config
from .csvio import CsvSheet, read_csv, sheet_from_scans
from .fitlab import FsrTable, fs2_per_m, gvd_from_fsrs
from .lockchain import epr_scan, odmr_map, odmr_response
from .scan import ScanResult
from .spinmodel import TransitionId, resonant_field

__all__ = ["TASKS", "TaskOutput", "run_scenario", "bundled_scenario", "bundled_table",
           "FIGURES", "add_noise"]

TASKS = ("spectrum-map", "epr-sweep", "odmr-map", "saturation-series", "fsr-analysis")


@dataclass
class TaskOutput:
    sheet: CsvSheet
    style: str              # "line" or "heatmap"
    value: str | None = None


def add_noise(values: np.ndarray, amplitude: float, rng: np.random.Generator) -> np.ndarray:
    """Additive Gaussian noise with standard deviation ``amplitude * max|values|``."""
    scale = amplitude * float(np.max(np.abs(values))) if values.size else 0.0
    return values + scale * rng.standard_normal(values.shape)


def _meta(sc: Scenario, task: str) -> dict[str, str]:
    return {"scenario": sc.scenario.id, "seed": str(sc.scenario.seed), "task": task}


def _spectrum_map(sc: Scenario, rng, workers):
    modes = sc.optical_modes()
    o = sc.optical
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CoarseGridWarning)
        scan = anticrossing_map(
            modes, sc.zeeman(), sc.transitions(), sc.b_grid(), sc.laser_grid(),
            sc.optical_profile(), o.g_total, n_packets=o.n_packets, gamma_h=o.gamma_h,
            temperature=sc.system.temperature, optical_power=o.power,
            rate=sc.optical_rate() if o.power > 0 else None,
            population_model=o.population_model,
            reference=modes[len(modes) // 2].nu_c, workers=workers)
    vals = add_noise(np.asarray(scan.values), sc.scenario.noise, rng)
    scan = ScanResult(scan.axis1, vals, scan.name, scan.unit, scan.axis2)
    return TaskOutput(sheet_from_scans([scan], {}), "heatmap", "reflectance")


def _epr(sc: Scenario, rng, workers, power=None):
    drive = sc.am_drive(power)
    scan = epr_scan(sc.mw(), sc.zeeman(), sc.spin_profile(), sc.spin.g_mw, sc.pound(), drive,
                    sc.b_grid(), rate=sc.spin_rate(), temperature=sc.system.temperature,
                    n_packets=sc.spin.n_packets, gamma_h=sc.spin.gamma_h,
                    saturation_model=sc.spin.saturation_model)
    return scan


def _epr_sweep(sc: Scenario, rng, workers):
    scan = _epr(sc, rng, workers)
    pull = add_noise(np.asarray(scan.values), sc.scenario.noise, rng)
    det = np.asarray(scan.metadata["detuning"], dtype=float)
    sheet = CsvSheet([("field", "T"), ("detuning", "Hz"), ("pull", "Hz")],
                     np.column_stack([scan.axis1.values, det, pull]))
    return TaskOutput(sheet, "line", "pull")


def _odmr_map(sc: Scenario, rng, workers):
    amp, phase = odmr_map(sc.odmr_setup(), sc.b_grid(), sc.nu_grid(), workers=workers)
    a = add_noise(np.asarray(amp.values), sc.scenario.noise, rng)
    amp = ScanResult(amp.axis1, a, "odmr_amplitude", "Hz", amp.axis2)
    phase = ScanResult(phase.axis1, phase.values, "odmr_phase_deg", "", phase.axis2)
    return TaskOutput(sheet_from_scans([amp, phase], {}), "heatmap", "odmr_amplitude")


def saturation_series(sc: Scenario, workers: int = 1):
    """Noise-free EPR peak-to-peak pull and ODMR amplitude versus input power."""
    powers = sc.power_grid()
    b_res = resonant_field(sc.zeeman(), TransitionId.MW_12, sc.mw_mode.nu_c)

    def one(p):
        scan = _epr(sc, None, 1, power=p)
        pp = float(np.max(scan.values) - np.min(scan.values))
        setup = sc.odmr_setup(power=p)
        z = odmr_response(setup, b_res, [setup.drive.carrier_freq])[0]
        return pp, abs(z)

    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            res = list(pool.map(one, powers))
    else:
        res = [one(p) for p in powers]
    epr = np.array([r[0] for r in res])
    odmr = np.array([r[1] for r in res])
    return powers, epr, odmr


def _saturation(sc: Scenario, rng, workers):
    p, epr, odmr = saturation_series(sc, workers)
    epr = add_noise(epr, sc.scenario.noise, rng)
    odmr = add_noise(odmr, sc.scenario.noise, rng)
    sheet = CsvSheet([("power", "W"), ("epr_pull_pp", "Hz"), ("odmr_shift", "Hz")],
                     np.column_stack([p, epr, odmr]))
    return TaskOutput(sheet, "line", None)


def bundled_table() -> str:
    return importlib.resources.files("doubleres").joinpath("data/table1_fsr.csv").read_text()


def load_fsr_table(text: str) -> FsrTable:
    sheet = read_csv(text)
    unc = sheet.column("uncertainty") if "uncertainty" in sheet.names else 0.5e6
    return FsrTable(sheet.column("mode_offset").astype(int), sheet.column("fsr"), unc)


def fsr_analysis(text: str, radius: float) -> CsvSheet:
    table = load_fsr_table(text)
    beta, err = gvd_from_fsrs(table, radius)
    return CsvSheet(
        [("mode_offset", ""), ("fsr", "Hz"), ("delta_fsr", "Hz"),
         ("beta2_fs2_per_m", ""), ("beta2_err_fs2_per_m", "")],
        np.column_stack([table.offsets, table.fsr, table.delta_fsr,
                         beta / fs2_per_m, err / fs2_per_m]))


def _fsr(sc: Scenario, rng, workers):
    if sc.fsr.data:
        with open(sc.fsr.data, encoding="utf-8") as fh:
            text = fh.read()
    else:
        text = bundled_table()
    sheet = fsr_analysis(text, sc.fsr.radius)
    return TaskOutput(sheet, "line", "beta2_fs2_per_m")


_DISPATCH = {
    "spectrum-map": _spectrum_map,
    "epr-sweep": _epr_sweep,
    "odmr-map": _odmr_map,
    "saturation-series": _saturation,
    "fsr-analysis": _fsr,
}


def run_scenario(sc: Scenario, task: str, workers: int | None = None) -> TaskOutput:
    """Run ``task``; output bytes depend only on the scenario, never on ``workers``."""
    if task not in _DISPATCH:
        raise ValueError(f"unknown task {task!r}; choose from {', '.join(TASKS)}")
    rng = np.random.default_rng(sc.scenario.seed)
    out = _DISPATCH[task](sc, rng, workers or sc.scenario.workers)
    out.sheet.meta = _meta(sc, task)
    return out


# ---------------------------------------------------------------------------
# bundled scenarios

FIGURES = {
    "fig3a": ("spectrum-map",),
    "fig3b": ("epr-sweep",),
    "fig4": ("spectrum-map",),
    "fig5": ("saturation-series",),
    "fig6b": ("odmr-map",),
    "fig6e": ("odmr-map",),
}


def bundled_scenario(name: str) -> Scenario:
    if name not in FIGURES:
        raise KeyError(f"no bundled scenario {name!r}")
    text = importlib.resources.files("doubleres").joinpath(f"scenarios/{name}.cfg").read_text()
    return parse_config(text)


def bundled_scenario_text(name: str) -> str:
    return importlib.resources.files("doubleres").joinpath(f"scenarios/{name}.cfg").read_text()
