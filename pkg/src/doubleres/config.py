"""Scenario files: a small INI-like grammar parsed into dataclasses.

::

    # comment
    [drive]
    power = "5 dBm"
    depth = 0.45
    [lock.servo]
    lowpass_enabled = true

Values are bare numbers (taken in base SI units), ``true``/``false``, or
double-quoted text.  Quoted text is parsed as a quantity for dimensioned keys
and taken verbatim for string keys.  Every key has a default; unknown or
repeated keys are errors reported with line and column.
"""

from __future__ import annotations

import dataclasses
import re
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .cavity import CavityMode, Polarization
from .ensemble import InhomProfile, RateParams
from .lockchain import AMDrive, DiscriminatorConfig, OdmrSetup, ServoConfig
from .physcore import Dimension, QuantityParseError, dbm_to_watts, parse_quantity, Quantity
from .spinmodel import TransitionId, ZeemanSystem

__all__ = ["ConfigError", "Scenario", "parse_config", "load_config", "SECTIONS"]

F = Dimension.FREQUENCY
T_ = Dimension.MAGNETIC_FLUX_DENSITY
P = Dimension.POWER
K = Dimension.TEMPERATURE
S = Dimension.TIME
L = Dimension.LENGTH
D = Dimension.DIMENSIONLESS


class ConfigError(ValueError):
    def __init__(self, message: str, line: int = 0, col: int = 0):
        self.line, self.col = line, col
        where = f"line {line}, column {col}: " if line else ""
        super().__init__(where + message)


def _q(default, dim):
    return field(default=default, metadata={"dim": dim})


@dataclass
class ScenarioMeta:
    id: str = _q("custom", str)
    seed: int = _q(0, int)
    noise: float = _q(0.01, D)
    workers: int = _q(1, int)


@dataclass
class SystemSection:
    nu0: float = _q(195116.7e9, F)
    g_ground: float = _q(11.52, D)
    g_excited: float = _q(7.7, D)
    temperature: float = _q(4.0, K)


@dataclass
class SpinSection:
    fwhm: float = _q(47.8e6, F)
    center: float = _q(0.0, F)
    gamma_h: float = _q(100e3, F)
    n_packets: int = _q(4096, int)
    g_mw: float = _q(2e6, F)
    t1: float = _q(50e-3, S)
    pump_rate_per_watt: float = _q(1e8, D)
    linewidth: float = _q(100e3, F)
    saturation_model: str = _q("diffusive", str)


@dataclass
class OpticalSection:
    transition: str = _q("O_24", str)
    fwhm: float = _q(200e6, F)
    center: float = _q(0.0, F)
    gamma_h: float = _q(1e3, F)
    n_packets: int = _q(4096, int)
    g_total: float = _q(1.2e9, F)
    population_model: str = _q("polarization", str)
    power: float = _q(0.0, P)
    t1: float = _q(10e-3, S)
    pump_rate_per_watt: float = _q(100.0, D)
    extra_transitions: str = _q("", str)


@dataclass
class OpticalModeSection:
    nu_c: float = _q(195112.7e9, F)
    kappa_int: float = _q(1.32e6, F)
    kappa_ext: float = _q(4.0e6, F)
    polarization: str = _q("TE", str)
    family_count: int = _q(1, int)
    fsr: float = _q(12.3e9, F)


@dataclass
class MwModeSection:
    nu_c: float = _q(12.155e9, F)
    kappa_int: float = _q(0.5e6, F)
    kappa_ext: float = _q(0.5e6, F)


@dataclass
class DriveSection:
    carrier: float = _q(12.155e9, F)
    power: float = _q(10 ** 0.5 * 1e-3, P)
    depth: float = _q(0.45, D)
    mod_freq: float = _q(1e3, F)
    insertion_loss: float = _q(40.0, D)
    waveform: str = _q("sine", str)
    field_enhancement: float = _q(1.0, D)


@dataclass
class PdhSection:
    mod_freq: float = _q(25e6, F)
    mod_depth: float = _q(1.0, D)


@dataclass
class PoundSection:
    mod_freq: float = _q(5e6, F)
    mod_depth: float = _q(1.0, D)


@dataclass
class ServoSection:
    unity_gain_bandwidth: float = _q(30.0, F)
    input_lowpass_corner: float = _q(151.8, F)
    lowpass_enabled: bool = _q(True, bool)
    branch: str = _q("photon-like", str)


@dataclass
class ScanSection:
    b_start: float = _q(0.0745, T_)
    b_stop: float = _q(0.0765, T_)
    b_step: float = _q(0.02e-3, T_)
    nu_start: float = _q(12.0e9, F)
    nu_stop: float = _q(12.3e9, F)
    nu_step: float = _q(5e6, F)
    laser_start: float = _q(-2e9, F)
    laser_stop: float = _q(2e9, F)
    laser_step: float = _q(1e6, F)
    p_start: float = _q(1e-5, P)
    p_stop: float = _q(1e-1, P)
    p_count: int = _q(13, int)


@dataclass
class FsrSection:
    data: str = _q("", str)
    radius: float = _q(2.1e-3, L)


SECTIONS: dict[str, type] = {
    "scenario": ScenarioMeta,
    "system": SystemSection,
    "spin": SpinSection,
    "optical": OpticalSection,
    "optical.mode": OpticalModeSection,
    "mw.mode": MwModeSection,
    "drive": DriveSection,
    "lock.pdh": PdhSection,
    "lock.pound": PoundSection,
    "lock.servo": ServoSection,
    "scan": ScanSection,
    "fsr": FsrSection,
}


def _attr(section: str) -> str:
    return section.replace(".", "_")


@dataclass
class Scenario:
    scenario: ScenarioMeta = field(default_factory=ScenarioMeta)
    system: SystemSection = field(default_factory=SystemSection)
    spin: SpinSection = field(default_factory=SpinSection)
    optical: OpticalSection = field(default_factory=OpticalSection)
    optical_mode: OpticalModeSection = field(default_factory=OpticalModeSection)
    mw_mode: MwModeSection = field(default_factory=MwModeSection)
    drive: DriveSection = field(default_factory=DriveSection)
    lock_pdh: PdhSection = field(default_factory=PdhSection)
    lock_pound: PoundSection = field(default_factory=PoundSection)
    lock_servo: ServoSection = field(default_factory=ServoSection)
    scan: ScanSection = field(default_factory=ScanSection)
    fsr: FsrSection = field(default_factory=FsrSection)

    # builders for the physics objects ------------------------------------

    def zeeman(self) -> ZeemanSystem:
        s = self.system
        return ZeemanSystem(s.nu0, s.g_ground, s.g_excited)

    def spin_profile(self) -> InhomProfile:
        return InhomProfile(self.spin.center, self.spin.fwhm)

    def spin_rate(self) -> RateParams:
        s = self.spin
        return RateParams(s.t1, s.pump_rate_per_watt, s.linewidth)

    def optical_profile(self) -> InhomProfile:
        return InhomProfile(self.optical.center, self.optical.fwhm)

    def optical_rate(self) -> RateParams:
        o = self.optical
        return RateParams(o.t1, o.pump_rate_per_watt, o.fwhm)

    def transitions(self) -> list[TransitionId]:
        main = [TransitionId.parse(self.optical.transition)]
        extra = [TransitionId.parse(t) for t in self.optical.extra_transitions.split(",") if t.strip()]
        return main + extra

    def optical_modes(self) -> list[CavityMode]:
        m = self.optical_mode
        pol = Polarization[m.polarization.upper()]
        n = m.family_count
        offsets = (np.arange(n) - (n - 1) / 2.0) * m.fsr
        return [CavityMode(m.nu_c + float(o), m.kappa_int, m.kappa_ext, pol) for o in offsets]

    def mw(self) -> CavityMode:
        m = self.mw_mode
        return CavityMode(m.nu_c, m.kappa_int, m.kappa_ext, Polarization.MW)

    def am_drive(self, power: float | None = None) -> AMDrive:
        d = self.drive
        return AMDrive(d.carrier, d.power if power is None else power, d.depth, d.mod_freq,
                       d.insertion_loss, d.waveform, d.field_enhancement)

    def pdh(self) -> DiscriminatorConfig:
        return DiscriminatorConfig(self.lock_pdh.mod_freq, self.lock_pdh.mod_depth, "PDH_optical")

    def pound(self) -> DiscriminatorConfig:
        return DiscriminatorConfig(self.lock_pound.mod_freq, self.lock_pound.mod_depth,
                                   "Pound_microwave")

    def servo(self) -> ServoConfig:
        s = self.lock_servo
        return ServoConfig(s.unity_gain_bandwidth, s.input_lowpass_corner, s.lowpass_enabled)

    def odmr_setup(self, power: float | None = None) -> OdmrSetup:
        o = self.optical
        return OdmrSetup(
            sys=self.zeeman(),
            opt_mode=self.optical_modes()[len(self.optical_modes()) // 2],
            opt_transition=self.transitions()[0],
            opt_profile=self.optical_profile(),
            opt_g_total=o.g_total,
            opt_gamma_h=o.gamma_h,
            n_opt=o.n_packets,
            population_model=o.population_model,
            mw_mode=self.mw(),
            spin_profile=self.spin_profile(),
            spin_gamma_h=self.spin.gamma_h,
            n_spin=self.spin.n_packets,
            rate=self.spin_rate(),
            saturation_model=self.spin.saturation_model,
            temperature=self.system.temperature,
            pdh=self.pdh(),
            servo=self.servo(),
            drive=self.am_drive(power),
            branch=self.lock_servo.branch,
        )

    def b_grid(self) -> np.ndarray:
        return _grid(self.scan.b_start, self.scan.b_stop, self.scan.b_step)

    def nu_grid(self) -> np.ndarray:
        return _grid(self.scan.nu_start, self.scan.nu_stop, self.scan.nu_step)

    def laser_grid(self) -> np.ndarray:
        return _grid(self.scan.laser_start, self.scan.laser_stop, self.scan.laser_step)

    def power_grid(self) -> np.ndarray:
        s = self.scan
        if s.p_count < 2 or not 0 < s.p_start < s.p_stop:
            raise ConfigError("power scan needs 0 < p_start < p_stop and p_count >= 2")
        return np.geomspace(s.p_start, s.p_stop, s.p_count)


def _grid(start: float, stop: float, step: float) -> np.ndarray:
    if step <= 0 or stop < start:
        raise ConfigError(f"invalid scan range {start}..{stop} step {step}")
    n = int(np.floor((stop - start) / step + 1e-9)) + 1
    return start + step * np.arange(n)


# ---------------------------------------------------------------------------
# parsing

_SECTION = re.compile(r"^\[\s*([A-Za-z_][\w]*(?:\.[A-Za-z_][\w]*)?)\s*\]\s*(?:#.*)?$")
_KEYVAL = re.compile(r"^([A-Za-z_]\w*)\s*=\s*(.*?)\s*$")
_NUMBER = re.compile(r"^[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?$")


def _strip_comment(raw: str) -> str:
    out = []
    in_str = False
    for ch in raw:
        if ch == '"':
            in_str = not in_str
        if ch == "#" and not in_str:
            break
        out.append(ch)
    return "".join(out).rstrip()


def _convert(text: str, kind: Any, lineno: int, col: int, key: str):
    if kind is bool:
        if text in ("true", "false"):
            return text == "true"
        raise ConfigError(f"{key}: expected true or false, got {text}", lineno, col)
    quoted = len(text) >= 2 and text[0] == '"' and text[-1] == '"'
    inner = text[1:-1] if quoted else text
    if kind is str:
        if not quoted:
            raise ConfigError(f"{key}: string values must be double-quoted", lineno, col)
        return inner
    if kind is int:
        if quoted or not re.fullmatch(r"[+-]?\d+", text):
            raise ConfigError(f"{key}: expected an integer, got {text}", lineno, col)
        return int(text)
    if not quoted:
        if text in ("true", "false") or not _NUMBER.match(text):
            raise ConfigError(f"{key}: expected a number or quoted quantity, got {text}", lineno, col)
        return float(text)
    try:
        q = parse_quantity(inner)
    except QuantityParseError as exc:
        raise ConfigError(f"{key}: {exc}", lineno, col + 1 + exc.offset) from None
    if kind is Dimension.POWER and q.dimension is Dimension.POWER_LOG:
        q = dbm_to_watts(q)
    if q.dimension is not kind:
        raise ConfigError(f"{key}: expected {kind.value}, got {q.dimension.value} ({inner})",
                          lineno, col)
    return q.value


def parse_config(text: str) -> Scenario:
    """Parse scenario text; missing sections and keys keep their defaults."""
    values: dict[str, dict[str, Any]] = {}
    seen: dict[tuple[str, str], int] = {}
    section: str | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw)
        if not line.strip():
            continue
        indent = len(line) - len(line.lstrip())
        stripped = line.strip()
        m = _SECTION.match(stripped)
        if m:
            section = m.group(1)
            if section not in SECTIONS:
                raise ConfigError(f"unknown section [{section}]", lineno, indent + 2)
            if section in values:
                raise ConfigError(f"duplicate section [{section}]", lineno, indent + 1)
            values[section] = {}
            continue
        m = _KEYVAL.match(stripped)
        if not m:
            raise ConfigError(f"cannot parse {stripped!r}", lineno, indent + 1)
        if section is None:
            raise ConfigError("key outside any section", lineno, indent + 1)
        key, val = m.group(1), m.group(2)
        kcol = indent + 1
        vcol = indent + stripped.index("=") + 2 + (len(stripped.split("=", 1)[1]) -
                                                   len(stripped.split("=", 1)[1].lstrip()))
        fields = {f.name: f for f in dataclasses.fields(SECTIONS[section])}
        if key not in fields:
            raise ConfigError(f"unknown key {key!r} in [{section}]", lineno, kcol)
        if (section, key) in seen:
            raise ConfigError(f"duplicate key {key!r} in [{section}] "
                              f"(first on line {seen[section, key]})", lineno, kcol)
        seen[section, key] = lineno
        if not val:
            raise ConfigError(f"{key}: missing value", lineno, vcol)
        values[section][key] = _convert(val, fields[key].metadata["dim"], lineno, vcol, key)
    sc = Scenario()
    for name, kv in values.items():
        setattr(sc, _attr(name), SECTIONS[name](**{**dataclasses.asdict(getattr(sc, _attr(name))), **kv}))
    return sc


def load_config(path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def format_config(sc: Scenario) -> str:
    """Canonical text of a scenario; ``parse_config(format_config(s)) == s``."""
    lines = []
    for name, cls in SECTIONS.items():
        sec = getattr(sc, _attr(name))
        lines.append(f"[{name}]")
        for f in dataclasses.fields(cls):
            v = getattr(sec, f.name)
            kind = f.metadata["dim"]
            if kind is bool:
                lines.append(f"{f.name} = {'true' if v else 'false'}")
            elif kind is str:
                lines.append(f'{f.name} = "{v}"')
            elif kind is int:
                lines.append(f"{f.name} = {int(v)}")
            else:
                lines.append(f"{f.name} = {float(v)!r}")
        lines.append("")
    return "\n".join(lines)
