"""Command-line front end: ``doubleres simulate|fit|analyze|reproduce``.

Exit codes: 0 success, 2 configuration/usage error, 3 numerical failure,
4 input/output error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .cavity import RootFindingError
from .config import ConfigError, load_config
from .csvio import CsvFormatError, CsvSheet, read_csv, write_csv
from .fitlab import FitError, FitResult, fit_gaussian_derivative, fit_reflection_dip, fit_saturation
from .lockchain import InstabilityError, UnlockedError, ZeroSlopeError
from .physcore import Dimension, QuantityParseError, parse_quantity, unit_info
from .svg import emit_svg
from .tasks import FIGURES, TASKS, bundled_scenario, fsr_analysis, run_scenario

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

_NUMERIC_ERRORS = (FitError, RootFindingError, UnlockedError, ZeroSlopeError,
                   InstabilityError, ArithmeticError, np.linalg.LinAlgError)


class UsageError(Exception):
    pass


def _write_text(path: str | Path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _read_text(path: str | Path) -> str:
    with open(path, encoding="utf-8") as fh:
        return fh.read()


# ---------------------------------------------------------------------------
# fit output


_UNITS_BY_ROLE = {
    "gaussian-derivative": {"amplitude": None, "center": "x", "fwhm": "x", "offset": "y",
                            "sigma": "x", "peak_to_peak": "y", "extremum_separation": "x"},
    "saturation": {"dnu_max": "y", "p_sat": "W", "p_sat_dbm": "dBm"},
    "reflection-dip": {"nu_c": "x", "kappa_int": "x", "kappa_ext": "x", "contrast": ""},
}


def fit_sheet(model: str, fit: FitResult, x_unit: str, y_unit: str, meta: dict) -> CsvSheet:
    roles = _UNITS_BY_ROLE[model]
    cols, row = [], []
    for name, role in roles.items():
        unit = {"x": x_unit, "y": y_unit, None: ""}.get(role, role)
        if name in fit.params or name in fit.derived:
            cols += [(name, unit), (f"{name}_err", unit if unit != "dBm" else "")]
            row += [fit[name], fit.err(name)]
    cols += [("residual_norm", ""), ("n_iter", ""), ("converged", "")]
    row += [fit.residual_norm, fit.n_iter, 1.0 if fit.converged else 0.0]
    return CsvSheet(cols, np.array([row]), meta)


def run_fit(model: str, sheet: CsvSheet, x: str | None = None, y: str | None = None,
            form: str = "auto") -> tuple[FitResult, CsvSheet]:
    names = sheet.names
    if model == "gaussian-derivative":
        x = x or ("detuning" if "detuning" in names else names[0])
        y = y or ("pull" if "pull" in names else names[-1])
    elif model == "saturation":
        x = x or names[0]
        y = y or names[1]
    elif model == "reflection-dip":
        x = x or names[0]
        y = y or names[-1]
    else:
        raise UsageError(f"unknown model {model!r}")
    try:
        xv, yv = sheet.column(x), sheet.column(y)
        xu, yu = sheet.columns[sheet.index(x)][1], sheet.columns[sheet.index(y)][1]
    except KeyError as exc:
        raise UsageError(str(exc)) from None
    # fits work in SI; report in the base unit of each column
    base = {Dimension.FREQUENCY: "Hz", Dimension.MAGNETIC_FLUX_DENSITY: "T",
            Dimension.POWER: "W", Dimension.TIME: "s", Dimension.LENGTH: "m",
            Dimension.TEMPERATURE: "K", Dimension.DIMENSIONLESS: "",
            Dimension.POWER_LOG: "dBm"}
    xu, yu = base[unit_info(xu)[0]], base[unit_info(yu)[0]]
    if model == "gaussian-derivative":
        fit = fit_gaussian_derivative(xv, yv)
    elif model == "saturation":
        if xu == "dBm":
            xv = 1e-3 * 10 ** (xv / 10.0)
        fit = fit_saturation(xv, yv, form=form)
    else:
        fit = fit_reflection_dip(xv, yv)
    meta = dict(sheet.meta)
    meta["fit"] = model
    return fit, fit_sheet(model, fit, xu, yu, meta)


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(args) -> int:
    if args.task not in TASKS:
        raise UsageError(f"unknown task {args.task!r}")
    sc = load_config(args.config)
    if args.seed is not None:
        sc.scenario.seed = args.seed
    out = run_scenario(sc, args.task, workers=args.jobs)
    _write_text(args.out, write_csv(out.sheet))
    if args.svg:
        _write_text(args.svg, emit_svg(out.sheet, out.style, out.value, title=sc.scenario.id))
    return EXIT_OK


def cmd_fit(args) -> int:
    sheet = read_csv(_read_text(args.inp))
    fit, table = run_fit(args.model, sheet, args.x, args.y, args.form)
    _write_text(args.out, write_csv(table))
    for w in fit.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return EXIT_OK


def cmd_analyze(args) -> int:
    radius = parse_quantity(args.radius)
    if radius.dimension is not Dimension.LENGTH:
        raise ConfigError(f"--radius must be a length, got {args.radius!r}")
    sheet = fsr_analysis(_read_text(args.inp), radius.value)
    sheet.meta = {"task": "fsr-analysis", "radius": args.radius}
    text = write_csv(sheet)
    if args.out:
        _write_text(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def reproduce(figure: str, outdir: Path, seed: int | None = None, jobs: int | None = None) -> list[Path]:
    """Run a bundled figure scenario; returns the files written."""
    if figure not in FIGURES:
        raise UsageError(f"unknown figure {figure!r}; choose from {', '.join(FIGURES)}")
    outdir.mkdir(parents=True, exist_ok=True)
    sc = bundled_scenario(figure)
    if seed is not None:
        sc.scenario.seed = seed
    (task,) = FIGURES[figure]
    out = run_scenario(sc, task, workers=jobs)
    written = []

    def put(name: str, text: str):
        p = outdir / name
        _write_text(p, text)
        written.append(p)

    put(f"{figure}.csv", write_csv(out.sheet))
    put(f"{figure}.svg", emit_svg(out.sheet, out.style, out.value, title=figure))
    if task == "odmr-map":
        put(f"{figure}_phase.svg", emit_svg(out.sheet, "heatmap", "odmr_phase_deg", title=figure))
    if task == "epr-sweep":
        _, table = run_fit("gaussian-derivative", out.sheet)
        put(f"{figure}_fit.csv", write_csv(table))
    if task == "saturation-series":
        _, epr = run_fit("saturation", out.sheet, "power", "epr_pull_pp", "decay")
        _, odmr = run_fit("saturation", out.sheet, "power", "odmr_shift", "rise")
        put(f"{figure}_fit_epr.csv", write_csv(epr))
        put(f"{figure}_fit_odmr.csv", write_csv(odmr))
    return written


def cmd_reproduce(args) -> int:
    for p in reproduce(args.figure, Path(args.outdir), args.seed, args.jobs):
        print(p)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="doubleres", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a simulation task from a scenario file")
    p.add_argument("task", choices=TASKS)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--svg")
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, help="worker threads (output does not depend on it)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit a model to CSV data")
    p.add_argument("--model", required=True, choices=list(_UNITS_BY_ROLE))
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--x", help="x column name")
    p.add_argument("--y", help="y column name")
    p.add_argument("--form", default="auto", choices=["auto", "rise", "decay"],
                   help="saturation law variant")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("analyze", help="derived analyses of measured tables")
    p.add_argument("what", choices=["fsr"])
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--radius", required=True, help='resonator radius, e.g. "2.1 mm"')
    p.add_argument("--out")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("reproduce", help="run a bundled figure scenario")
    p.add_argument("figure", choices=list(FIGURES))
    p.add_argument("--outdir", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int)
    p.set_defaults(func=cmd_reproduce)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (ConfigError, UsageError, QuantityParseError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, CsvFormatError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except _NUMERIC_ERRORS as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
