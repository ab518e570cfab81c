"""Lock and readout chain: discriminators, servo, AM drive, lock-in, scan drivers.

The ODMR chain is available twice: :func:`odmr_response` is the linearised
frequency-domain model, :func:`time_domain_oracle` integrates the same physics
explicitly and demodulates it like the instrument does.  They are meant to be
checked against each other.

Phase convention: signals are ``Re[z exp(i w t)]`` with the modulation
reference ``cos(w t)``; a lag is a negative phase.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import jv

from . import ensemble as ens
from .cavity import CavityMode, optical_coupling_at, outer_branches, reflection
from .ensemble import EnsembleCoupling, InhomProfile, RateParams
from .scan import Axis, ScanResult
from .spinmodel import (
    TransitionId,
    ZeemanSystem,
    thermal_populations,
    transition_frequency,
)

__all__ = [
    "DiscriminatorConfig",
    "ServoConfig",
    "AMDrive",
    "LockInReading",
    "OdmrSetup",
    "ZeroSlopeError",
    "UnlockedError",
    "InstabilityError",
    "discriminant",
    "pdh_error",
    "pound_error",
    "calibrate_slope",
    "servo_loop_gain",
    "closed_loop_factor",
    "lockin_demodulate",
    "epr_scan",
    "odmr_response",
    "odmr_point",
    "odmr_map",
    "time_domain_oracle",
]


class ZeroSlopeError(ArithmeticError):
    pass


class UnlockedError(RuntimeError):
    pass


class InstabilityError(ArithmeticError):
    pass


@dataclass(frozen=True)
class DiscriminatorConfig:
    mod_freq: float = 25e6
    mod_depth: float = 1.0
    kind: str = "PDH_optical"

    def __post_init__(self):
        if not (self.mod_freq > 0 and self.mod_depth > 0):
            raise ValueError("modulation frequency and depth must be positive")
        if self.kind not in ("PDH_optical", "Pound_microwave"):
            raise ValueError(f"unknown discriminator kind {self.kind!r}")


@dataclass(frozen=True)
class ServoConfig:
    unity_gain_bandwidth: float = 30.0
    input_lowpass_corner: float = 151.8
    lowpass_enabled: bool = True

    def __post_init__(self):
        if not (self.unity_gain_bandwidth > 0 and self.input_lowpass_corner > 0):
            raise ValueError("servo bandwidth and low-pass corner must be positive")


@dataclass(frozen=True)
class AMDrive:
    """Amplitude-modulated microwave drive; ``depth`` modulates the power."""

    carrier_freq: float = 12.155e9
    power_in: float = 10 ** 0.5 * 1e-3  # 5 dBm
    depth: float = 0.45
    mod_freq: float = 1e3
    insertion_loss_db: float = 40.0
    waveform: str = "sine"
    field_enhancement: float = 1.0

    def __post_init__(self):
        if not 0 <= self.depth <= 1:
            raise ValueError("modulation depth must lie in [0, 1]")
        if self.waveform not in ("sine", "square"):
            raise ValueError(f"unknown waveform {self.waveform!r}")
        if self.power_in < 0 or self.mod_freq <= 0 or self.insertion_loss_db < 0:
            raise ValueError("invalid drive parameters")

    @property
    def first_harmonic_depth(self) -> float:
        return self.depth * (4.0 / math.pi if self.waveform == "square" else 1.0)

    def waveform_at(self, t):
        c = np.cos(2.0 * math.pi * self.mod_freq * np.asarray(t))
        return c if self.waveform == "sine" else np.sign(c)


@dataclass(frozen=True)
class LockInReading:
    amplitude: float
    phase: float  # degrees, (-180, 180]

    @classmethod
    def from_complex(cls, z: complex) -> "LockInReading":
        ph = math.degrees(math.atan2(z.imag, z.real))
        if ph <= -180.0:
            ph += 360.0
        return cls(abs(z), ph)

    @property
    def complex(self) -> complex:
        return self.amplitude * complex(math.cos(math.radians(self.phase)),
                                        math.sin(math.radians(self.phase)))


# ---------------------------------------------------------------------------
# discriminators


def discriminant(cfg: DiscriminatorConfig, mode: CavityMode, delta,
                 coupling: EnsembleCoupling | None = None, ens_offset: float = 0.0):
    """Three-tone phase-modulation error signal (units of incident power)."""
    delta = np.asarray(delta, dtype=float)
    W = cfg.mod_freq
    r0 = reflection(mode, delta, coupling, ens_offset)
    rp = reflection(mode, delta + W, coupling, ens_offset)
    rm = reflection(mode, delta - W, coupling, ens_offset)
    F = r0 * np.conj(rp) - np.conj(r0) * rm
    b = cfg.mod_depth
    return 2.0 * jv(0, b) * jv(1, b) * np.imag(F)


def pdh_error(cfg: DiscriminatorConfig, mode: CavityMode, delta,
              coupling: EnsembleCoupling | None = None, ens_offset: float = 0.0):
    if cfg.kind != "PDH_optical":
        raise ValueError("pdh_error needs a PDH_optical configuration")
    return discriminant(cfg, mode, delta, coupling, ens_offset)


def pound_error(cfg: DiscriminatorConfig, mode: CavityMode, delta,
                coupling: EnsembleCoupling | None = None, ens_offset: float = 0.0):
    if cfg.kind != "Pound_microwave":
        raise ValueError("pound_error needs a Pound_microwave configuration")
    return discriminant(cfg, mode, delta, coupling, ens_offset)


def calibrate_slope(cfg: DiscriminatorConfig, mode: CavityMode,
                    coupling: EnsembleCoupling | None = None, ens_offset: float = 0.0,
                    at: float = 0.0) -> float:
    """Hz per error-signal unit: reciprocal of dE/d(delta) at the lock point."""
    h = 1e-4 * mode.kappa
    e = discriminant(cfg, mode, np.array([at - h, at + h]), coupling, ens_offset)
    slope = (e[1] - e[0]) / (2.0 * h)
    if not np.isfinite(slope) or abs(slope) * mode.kappa < 1e-12:
        raise ZeroSlopeError("error-signal slope vanishes at the lock point")
    return 1.0 / slope


# ---------------------------------------------------------------------------
# servo and lock-in


def servo_loop_gain(servo: ServoConfig, f):
    """Open-loop gain: integrator with unity gain at ``unity_gain_bandwidth``,
    optionally behind the first-order input low-pass."""
    s = 2j * math.pi * np.asarray(f, dtype=float)
    L = 2.0 * math.pi * servo.unity_gain_bandwidth / s
    if servo.lowpass_enabled:
        L = L / (1.0 + s / (2.0 * math.pi * servo.input_lowpass_corner))
    return L


def closed_loop_factor(servo: ServoConfig, f):
    """Fraction of a cavity excursion at ``f`` left in the locked error signal."""
    return 1.0 / (1.0 + servo_loop_gain(servo, f))


def lockin_demodulate(t, signal, f_ref: float, phase_ref: float = 0.0) -> LockInReading:
    """Demodulate ``signal`` against ``cos(2 pi f_ref t + phase_ref)``.

    Uses the trailing whole number of reference periods; equally spaced
    samples are assumed.
    """
    t = np.asarray(t, dtype=float)
    x = np.asarray(signal, dtype=float)
    if t.size != x.size or t.size < 4:
        raise ValueError("need matching time and signal arrays")
    dt = t[1] - t[0]
    per_period = 1.0 / (f_ref * dt)
    n_periods = int(math.floor(t.size / per_period + 1e-9))
    if n_periods < 1:
        raise ValueError("record shorter than one reference period")
    n = int(round(n_periods * per_period))
    tt, xx = t[-n:], x[-n:]
    z = 2.0 * np.mean(xx * np.exp(-1j * (2.0 * math.pi * f_ref * tt + phase_ref)))
    return LockInReading.from_complex(complex(z))


# ---------------------------------------------------------------------------
# EPR


def _mw_cavity_power(drive: AMDrive, mw_mode: CavityMode, nu_mu, enhancement: float = 1.0):
    lor = ens.lorentzian(np.asarray(nu_mu, dtype=float) - mw_mode.nu_c, mw_mode.kappa)
    return drive.power_in * 10 ** (-drive.insertion_loss_db / 10.0) * lor * enhancement**2


def saturated_spin_packets(packets: ens.PacketSet, rate: RateParams, p_cav: float,
                           drive_detuning: float, s_th: float, model: str):
    if p_cav == 0:
        return packets.with_pop_diff(s_th)
    return ens.saturate_packets(packets, rate, p_cav, drive_detuning, s_th, model)


def epr_scan(mw_mode: CavityMode, sys: ZeemanSystem, spin_profile: InhomProfile,
             g_mw: float, pound: DiscriminatorConfig, drive: AMDrive, b_grid, *,
             rate: RateParams | None = None, temperature: float = 4.0,
             n_packets: int = 4096, gamma_h: float = 100e3,
             saturation_model: str = "diffusive") -> ScanResult:
    """Pound-locked EPR sweep: calibrated cavity excursion (Hz) versus field.

    The carrier sits at ``drive.carrier_freq`` (nominally the cavity frequency)
    with CW power ``drive.power_in``; it both reads out and saturates the spins.
    """
    rate = rate or RateParams()
    b_grid = np.asarray(b_grid, dtype=float)
    base = ens.discretize(InhomProfile(0.0, spin_profile.fwhm), n_packets, gamma_h)
    cal = calibrate_slope(pound, mw_mode, at=drive.carrier_freq - mw_mode.nu_c)
    p_cav = float(_mw_cavity_power(drive, mw_mode, drive.carrier_freq))
    out = np.empty(b_grid.size)
    for i, B in enumerate(b_grid):
        center = float(transition_frequency(sys, TransitionId.MW_12, B)) + spin_profile.center
        s_th = thermal_populations(sys, B, temperature).difference
        pk = saturated_spin_packets(base, rate, p_cav, drive.carrier_freq - center, s_th,
                                    saturation_model)
        pull = float(ens.dispersive_pull(EnsembleCoupling(g_mw, pk), mw_mode.nu_c - center))
        e = float(discriminant(pound, mw_mode, drive.carrier_freq - (mw_mode.nu_c + pull)))
        e0 = float(discriminant(pound, mw_mode, drive.carrier_freq - mw_mode.nu_c))
        out[i] = -(e - e0) * cal
    return ScanResult(Axis("field", "T", b_grid), out, name="pull", unit="Hz",
                      metadata={"detuning": mw_mode.nu_c - transition_frequency(
                          sys, TransitionId.MW_12, b_grid) - spin_profile.center})


# ---------------------------------------------------------------------------
# ODMR


@dataclass(frozen=True)
class OdmrSetup:
    """Everything the modified-ODMR chain needs, with defaults matching the reference setup."""

    sys: ZeemanSystem = field(default_factory=ZeemanSystem)
    opt_mode: CavityMode = field(default_factory=lambda: CavityMode(195112.7e9, 1.32e6, 4.0e6))
    opt_transition: TransitionId = TransitionId.O_24
    opt_profile: InhomProfile = field(default_factory=lambda: InhomProfile(0.0, 200e6))
    opt_g_total: float = 1.2e9
    opt_gamma_h: float = 1e3
    n_opt: int = 4096
    population_model: str = "polarization"
    mw_mode: CavityMode = field(default_factory=lambda: CavityMode(12.155e9, 50e6, 50e6))
    spin_profile: InhomProfile = field(default_factory=lambda: InhomProfile(0.0, 47.8e6))
    spin_gamma_h: float = 100e3
    n_spin: int = 4096
    rate: RateParams = field(default_factory=lambda: RateParams(50e-3, 1e8, 100e3))
    saturation_model: str = "diffusive"
    temperature: float = 4.0
    pdh: DiscriminatorConfig = field(default_factory=DiscriminatorConfig)
    servo: ServoConfig = field(default_factory=ServoConfig)
    drive: AMDrive = field(default_factory=AMDrive)
    branch: str = "photon-like"
    min_photon_fraction: float = 0.05


@dataclass(frozen=True)
class _Branch:
    center: float        # ensemble centre (Hz, absolute)
    wc: float            # mode offset from ensemble centre
    x: float             # branch root relative to centre
    photon_fraction: float
    linewidth: float
    coupling: EnsembleCoupling
    sa: float            # population difference = sa + sb * s_mw
    sb: float


def _optical_population_map(setup: OdmrSetup):
    """(a, b) with optical population difference a + b * (p1 - p2)."""
    if setup.population_model == "polarization":
        return 0.0, 1.0
    if setup.population_model == "lower-level":
        return 0.5, (0.5 if setup.opt_transition.lower == 1 else -0.5)
    raise ValueError(f"unknown population model {setup.population_model!r}")


def _spin_static(setup: OdmrSetup, B: float, nu_mu, p_cav):
    """Static MW population difference and complex first-harmonic response."""
    sys = setup.sys
    s_th = thermal_populations(sys, B, setup.temperature).difference
    center = float(transition_frequency(sys, TransitionId.MW_12, B)) + setup.spin_profile.center
    nu_mu = np.atleast_1d(np.asarray(nu_mu, dtype=float))
    p_cav = np.broadcast_to(np.asarray(p_cav, dtype=float), nu_mu.shape)
    depth = setup.drive.first_harmonic_depth
    f = setup.drive.mod_freq
    rate = setup.rate
    if setup.saturation_model == "diffusive":
        pk = _spin_packets(setup)
        eff = p_cav * ens.drive_overlap(pk, nu_mu - center, rate.linewidth)
        s0 = ens.steady_state_saturation(rate, eff, 0.0, s_th)
        # linear response: compute at unit depth and scale by the fundamental
        ds = depth * ens.am_population_response(rate, eff, 1.0, f, 0.0, s_th)
    elif setup.saturation_model == "packet":
        pk = _spin_packets(setup)
        det = nu_mu[:, None] - center - pk.detuning[None, :]
        s0 = np.sum(pk.weight * ens.steady_state_saturation(rate, p_cav[:, None], det, s_th), axis=1)
        x = p_cav[:, None] / rate.p_sat * ens.lorentzian(det, rate.linewidth)
        resp = -s_th * x / (1 + x) ** 2 / (1 + 2j * math.pi * f * rate.t1 / (1 + x))
        ds = depth * np.sum(pk.weight * resp, axis=1)
    else:
        raise ValueError(f"unknown saturation model {setup.saturation_model!r}")
    return s_th, np.asarray(s0), np.asarray(ds)


_PACKET_CACHE: dict = {}


def _spin_packets(setup: OdmrSetup) -> ens.PacketSet:
    key = ("spin", setup.spin_profile.fwhm, setup.n_spin, setup.spin_gamma_h)
    if key not in _PACKET_CACHE:
        _PACKET_CACHE[key] = ens.discretize(InhomProfile(0.0, setup.spin_profile.fwhm),
                                            setup.n_spin, setup.spin_gamma_h)
    return _PACKET_CACHE[key]


def _select_branch(setup: OdmrSetup, B: float, s_mw: float) -> _Branch:
    a, b = _optical_population_map(setup)
    s_opt = a + b * s_mw
    coupling, center = optical_coupling_at(
        setup.sys, setup.opt_transition, B, setup.opt_profile, setup.opt_g_total,
        n_packets=setup.n_opt, gamma_h=setup.opt_gamma_h, temperature=setup.temperature)
    coupling = coupling.with_packets(coupling.packets.with_pop_diff(s_opt))
    wc = setup.opt_mode.nu_c - center
    br = outer_branches(setup.opt_mode, coupling, wc)
    if setup.branch == "photon-like":
        j = int(np.argmax(br.photon_fraction))
    elif setup.branch == "lower":
        j = 0
    elif setup.branch == "upper":
        j = len(br) - 1
    else:
        raise ValueError(f"unknown branch selector {setup.branch!r}")
    pf = float(br.photon_fraction[j])
    if pf < setup.min_photon_fraction:
        raise UnlockedError(f"selected branch has photon fraction {pf:.3g}; cannot lock")
    return _Branch(center, wc, float(br.frequency[j] - center), pf, float(br.linewidth[j]),
                   coupling, a, b)


def _branch_sensitivity(br: _Branch) -> float:
    """d(branch frequency)/d(g_total^2 * s) in Hz per Hz^2."""
    p = br.coupling.packets
    r = 1.0 / (br.x - p.detuning)
    return float(np.sum(p.weight * r)) * br.photon_fraction


def _effective_mode(setup: OdmrSetup, br: _Branch) -> CavityMode:
    kext = br.photon_fraction * setup.opt_mode.kappa_ext
    return CavityMode(br.center + br.x, br.linewidth - kext, kext)


def _odmr_chain(setup: OdmrSetup, B: float, nu_mu):
    p_cav = _mw_cavity_power(setup.drive, setup.mw_mode, nu_mu, setup.drive.field_enhancement)
    s_th, s0, ds = _spin_static(setup, B, nu_mu, p_cav)
    return s_th, s0, ds, p_cav


def odmr_response(setup: OdmrSetup, B: float, nu_mu) -> np.ndarray:
    """Complex lock-in readout (Hz) of the optical mode excursion at ``f_mod``.

    Linear response around the static, drive-saturated state. Vectorised over
    ``nu_mu``; the optical branch is re-solved for each distinct static
    population difference.
    """
    nu_mu = np.atleast_1d(np.asarray(nu_mu, dtype=float))
    s_th, s0, ds, _ = _odmr_chain(setup, B, nu_mu)
    cl = complex(closed_loop_factor(setup.servo, setup.drive.mod_freq))
    out = np.empty(nu_mu.size, dtype=complex)
    g2 = setup.opt_g_total**2
    # the static branch depends on the static saturation; solve per distinct value
    cache: dict = {}
    for i, s in enumerate(np.asarray(s0, dtype=float)):
        key = round(float(s), 15)
        if key not in cache:
            br = _select_branch(setup, B, float(s))
            cache[key] = (_branch_sensitivity(br), br)
        sens, br = cache[key]
        out[i] = sens * g2 * br.sb * ds[i] * cl
    return out


def odmr_point(setup: OdmrSetup, B: float, nu_mu: float | None = None) -> LockInReading:
    nu_mu = setup.drive.carrier_freq if nu_mu is None else nu_mu
    s_th, s0, _, _ = _odmr_chain(setup, B, [nu_mu])
    br = _select_branch(setup, B, float(s0[0]))
    calibrate_slope(setup.pdh, _effective_mode(setup, br))  # raises on a flat error signal
    return LockInReading.from_complex(complex(odmr_response(setup, B, [nu_mu])[0]))


def odmr_map(setup: OdmrSetup, b_grid, nu_grid, workers: int = 1):
    """Amplitude and phase maps over (field, microwave frequency)."""
    b_grid = np.asarray(b_grid, dtype=float)
    nu_grid = np.asarray(nu_grid, dtype=float)
    if np.any(np.diff(b_grid) <= 0) or np.any(np.diff(nu_grid) <= 0):
        raise ValueError("grids must be strictly increasing")

    def row(B):
        return odmr_response(setup, B, nu_grid)

    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(row, b_grid))
    else:
        rows = [row(B) for B in b_grid]
    z = np.vstack(rows)
    amp = np.abs(z)
    phase = np.degrees(np.angle(z))
    ax1 = Axis("field", "T", b_grid)
    ax2 = Axis("mw_frequency", "Hz", nu_grid)
    return (ScanResult(ax1, amp, name="odmr_amplitude", unit="Hz", axis2=ax2),
            ScanResult(ax1, phase, name="odmr_phase", unit="", axis2=ax2))


# ---------------------------------------------------------------------------
# time-domain oracle


@dataclass(frozen=True)
class OracleResult:
    t: np.ndarray
    signal: np.ndarray
    reading: LockInReading


def time_domain_oracle(setup: OdmrSetup, B: float, nu_mu: float | None = None, *,
                       duration: float | None = None, dt: float | None = None,
                       measure_periods: int = 20, settle_periods: int = 40) -> OracleResult:
    """Explicit time stepping of the whole ODMR chain, then digital lock-in.

    Steps: exponential integration of the spin rate equation under the
    modulated drive, exact re-solve of the optical branch, PDH error of the
    branch, low-pass plus integrator servo acting on the laser, and lock-in
    demodulation of the calibrated error over the last ``measure_periods``.
    """
    drive = setup.drive
    f = drive.mod_freq
    nu_mu = drive.carrier_freq if nu_mu is None else nu_mu
    dt = 1.0 / (64.0 * f) if dt is None else dt
    if dt > 1.0 / (50.0 * f):
        raise ValueError("dt must resolve at least 50 steps per modulation period")
    if duration is None:
        duration = (settle_periods + measure_periods) / f
    n_steps = int(round(duration / dt))
    if n_steps * dt * f < measure_periods:
        raise ValueError("duration shorter than the demodulation window")

    sys = setup.sys
    rate = setup.rate
    s_th = thermal_populations(sys, B, setup.temperature).difference
    mw_center = float(transition_frequency(sys, TransitionId.MW_12, B)) + setup.spin_profile.center
    p_mean = float(_mw_cavity_power(drive, setup.mw_mode, nu_mu, drive.field_enhancement))
    pk = _spin_packets(setup)
    if setup.saturation_model == "diffusive":
        line = np.array([float(ens.drive_overlap(pk, nu_mu - mw_center, rate.linewidth))])
        weights = np.array([1.0])
    else:
        line = ens.lorentzian(nu_mu - mw_center - pk.detuning, rate.linewidth)
        weights = pk.weight
    k_rate = rate.pump_rate_per_watt * line

    # start from the steady state of the mean power
    s = s_th / (1.0 + k_rate * p_mean * rate.t1)
    s_mw0 = float(np.sum(weights * s))
    br = _select_branch(setup, B, s_mw0)
    eff_mode = _effective_mode(setup, br)
    cal = calibrate_slope(setup.pdh, eff_mode)
    opt = br.coupling.packets
    g2w = setup.opt_g_total**2 * opt.weight
    d = opt.detuning
    x = br.x

    servo = setup.servo
    w_u = 2.0 * math.pi * servo.unity_gain_bandwidth
    lp_alpha = 1.0 - math.exp(-2.0 * math.pi * servo.input_lowpass_corner * dt)
    nu_laser = br.center + br.x  # locked at the static branch
    y = 0.0

    t = np.arange(1, n_steps + 1) * dt
    sig = np.empty(n_steps)
    bound = s_th**2 * (1.0 + 1e-9)
    for n in range(n_steps):
        tm = (n + 0.5) * dt
        R = k_rate * p_mean * (1.0 + drive.depth * float(drive.waveform_at(tm)))
        inv_tau = 1.0 / rate.t1 + R
        s_inf = (s_th / rate.t1) / inv_tau
        s = s_inf + (s - s_inf) * np.exp(-dt * inv_tau)
        norm = float(np.sum(weights * s * s))
        if not np.isfinite(norm) or norm > bound:
            raise InstabilityError("population norm grew during integration")
        s_opt = br.sa + br.sb * float(np.sum(weights * s))
        # Newton re-solve of the branch, warm-started from the previous step
        for _ in range(20):
            r = 1.0 / (x - d)
            fx = x - br.wc - s_opt * np.dot(g2w, r)
            fpx = 1.0 + s_opt * np.dot(g2w, r * r)
            step = fx / fpx
            x -= step
            if abs(step) < 1e-9:
                break
        nu_p = br.center + x
        e = float(discriminant(setup.pdh, eff_mode, nu_laser - nu_p))
        sig[n] = -cal * e
        if servo.lowpass_enabled:
            y += lp_alpha * (e - y)
        else:
            y = e
        nu_laser += w_u * (-cal * y) * dt
    reading = lockin_demodulate(t[-int(round(measure_periods / (f * dt))):],
                                sig[-int(round(measure_periods / (f * dt))):], f)
    return OracleResult(t, sig, reading)
