"""Inhomogeneously broadened ensembles as weighted spin packets.

A Gaussian profile is cut into ``n`` equal-probability packets.  Each packet
carries a detuning from the profile centre, a weight, a population difference
and a homogeneous FWHM.  The cavity sees the ensemble only through the
complex self-energy

    Sigma(D) = sum_k g_k^2 / (i (D - d_k) + gamma_h / 2),   g_k^2 = g^2 w_k s_k

with every rate in cyclic units (Hz).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterator

import numpy as np
from scipy.special import dawsn, ndtri, wofz

__all__ = [
    "FWHM_TO_SIGMA",
    "InhomProfile",
    "SpinPacket",
    "PacketSet",
    "EnsembleCoupling",
    "RateParams",
    "discretize",
    "self_energy",
    "dispersive_pull",
    "gaussian_self_energy",
    "lorentzian",
    "steady_state_saturation",
    "drive_overlap",
    "saturate_packets",
    "am_population_response",
]

FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))

_CHUNK = 2**22  # complex elements per evaluation block


@dataclass(frozen=True)
class InhomProfile:
    center: float = 0.0
    fwhm: float = 47.8e6

    def __post_init__(self):
        if not self.fwhm > 0:
            raise ValueError("fwhm must be positive")

    @property
    def sigma(self) -> float:
        return self.fwhm * FWHM_TO_SIGMA

    def density(self, delta):
        s = self.sigma
        x = (np.asarray(delta, dtype=float) - self.center) / s
        return np.exp(-0.5 * x * x) / (s * math.sqrt(2.0 * math.pi))


@dataclass(frozen=True)
class SpinPacket:
    detuning: float
    weight: float
    pop_diff: float
    gamma_h: float


@dataclass(frozen=True)
class PacketSet:
    """Immutable column-wise packet list (one array entry per packet)."""

    detuning: np.ndarray
    weight: np.ndarray
    pop_diff: np.ndarray
    gamma_h: np.ndarray

    def __post_init__(self):
        arrays = [np.array(a, dtype=float) for a in
                  (self.detuning, self.weight, self.pop_diff, self.gamma_h)]
        n = arrays[0].shape
        if any(a.shape != n for a in arrays) or len(n) != 1 or n[0] == 0:
            raise ValueError("packet arrays must be equal-length, 1-D and non-empty")
        if np.any(arrays[3] <= 0):
            raise ValueError("gamma_h must be positive")
        for a in arrays:
            a.setflags(write=False)
        for name, a in zip(("detuning", "weight", "pop_diff", "gamma_h"), arrays):
            object.__setattr__(self, name, a)

    def __len__(self) -> int:
        return self.detuning.size

    def __iter__(self) -> Iterator[SpinPacket]:
        for row in zip(self.detuning, self.weight, self.pop_diff, self.gamma_h):
            yield SpinPacket(*map(float, row))

    @classmethod
    def from_packets(cls, packets) -> "PacketSet":
        packets = list(packets)
        return cls(
            np.array([p.detuning for p in packets]),
            np.array([p.weight for p in packets]),
            np.array([p.pop_diff for p in packets]),
            np.array([p.gamma_h for p in packets]),
        )

    def with_pop_diff(self, s) -> "PacketSet":
        s = np.broadcast_to(np.asarray(s, dtype=float), self.detuning.shape)
        return replace(self, pop_diff=np.array(s))

    @property
    def mean_pop_diff(self) -> float:
        return float(np.sum(self.weight * self.pop_diff))


@dataclass(frozen=True)
class EnsembleCoupling:
    """Collective coupling ``g_total`` (Hz, i.e. g/2pi) of a packet set."""

    g_total: float
    packets: PacketSet

    def __post_init__(self):
        if self.g_total < 0:
            raise ValueError("g_total must be non-negative")

    @property
    def g2(self) -> np.ndarray:
        """Per-packet squared coupling g_k^2 (Hz^2)."""
        p = self.packets
        return self.g_total**2 * p.weight * p.pop_diff

    def with_packets(self, packets: PacketSet) -> "EnsembleCoupling":
        return EnsembleCoupling(self.g_total, packets)


@dataclass(frozen=True)
class RateParams:
    """Two-level rate-equation parameters of the driven transition.

    ``linewidth`` is the FWHM of the unit-peak Lorentzian that sets how the
    stimulated rate falls off with drive detuning.
    """

    t1: float = 50e-3
    pump_rate_per_watt: float = 1e8
    linewidth: float = 100e3

    def __post_init__(self):
        if not (self.t1 > 0 and self.pump_rate_per_watt > 0 and self.linewidth > 0):
            raise ValueError("t1, pump_rate_per_watt and linewidth must be positive")

    @property
    def p_sat(self) -> float:
        """Effective saturation power (W) at line centre."""
        return 1.0 / (self.pump_rate_per_watt * self.t1)


def discretize(profile: InhomProfile, n: int, gamma_h: float = 100e3,
               pop_diff: float = 1.0) -> PacketSet:
    """Equal-weight packets at the midpoint quantiles of the Gaussian."""
    if n < 2:
        raise ValueError("need at least two packets")
    u = (np.arange(n) + 0.5) / n
    z = ndtri(u)
    # exact antisymmetry of the quantile pairs
    z = 0.5 * (z - z[::-1])
    return PacketSet(
        detuning=profile.sigma * z,
        weight=np.full(n, 1.0 / n),
        pop_diff=np.full(n, float(pop_diff)),
        gamma_h=np.full(n, float(gamma_h)),
    )


def self_energy(coupling: EnsembleCoupling, delta):
    """Complex self-energy (Hz) at probe detuning ``delta`` from the profile centre."""
    delta = np.asarray(delta, dtype=float)
    flat = delta.reshape(-1)
    p = coupling.packets
    g2 = coupling.g2
    half = 0.5 * p.gamma_h
    out = np.empty(flat.shape, dtype=complex)
    step = max(1, _CHUNK // len(p))
    for i in range(0, flat.size, step):
        d = flat[i:i + step, None] - p.detuning[None, :]
        out[i:i + step] = np.sum(g2 / (1j * d + half), axis=1)
    return out.reshape(delta.shape) if delta.ndim else complex(out[0])


def dispersive_pull(coupling: EnsembleCoupling, delta):
    """Frequency pull (Hz) on a mode detuned by ``delta`` above the ensemble centre."""
    return -np.imag(self_energy(coupling, delta))


def gaussian_self_energy(g_total: float, fwhm: float, delta, gamma_h: float = 0.0,
                         pop_diff: float = 1.0):
    """Closed-form self-energy of a continuous Gaussian profile.

    Uses the Faddeeva function; for ``gamma_h == 0`` the dispersive part is the
    Dawson-function Hilbert transform ``g^2 (sqrt(2)/sigma) D(delta/(sqrt(2) sigma))``.
    """
    sigma = fwhm * FWHM_TO_SIGMA
    delta = np.asarray(delta, dtype=float)
    g2 = g_total**2 * pop_diff
    if gamma_h == 0:
        re = g2 * math.sqrt(math.pi / 2.0) / sigma * np.exp(-0.5 * (delta / sigma) ** 2)
        im = -g2 * math.sqrt(2.0) / sigma * dawsn(delta / (math.sqrt(2.0) * sigma))
        return re + 1j * im
    z = (delta + 0.5j * gamma_h) / (math.sqrt(2.0) * sigma)
    return g2 * math.sqrt(math.pi / 2.0) / sigma * np.conj(wofz(z))


def lorentzian(detuning, linewidth):
    """Unit-peak Lorentzian with FWHM ``linewidth``."""
    x = 2.0 * np.asarray(detuning, dtype=float) / linewidth
    return 1.0 / (1.0 + x * x)


def steady_state_saturation(params: RateParams, p_drive, detuning, thermal_diff):
    """Steady-state population difference under a CW drive of power ``p_drive`` (W)."""
    p_drive = np.asarray(p_drive, dtype=float)
    if np.any(p_drive < 0):
        raise ValueError("drive power must be non-negative")
    x = p_drive / params.p_sat * lorentzian(detuning, params.linewidth)
    return thermal_diff / (1.0 + x)


def drive_overlap(packets: PacketSet, drive_detuning, linewidth: float):
    """Packet-averaged drive lineshape, normalised to one at the profile centre.

    Used when spectral diffusion spreads the drive over the whole line, so all
    packets share one population difference.
    """
    drive_detuning = np.asarray(drive_detuning, dtype=float)
    w = packets.weight
    d = packets.detuning
    num = np.sum(w * lorentzian(drive_detuning[..., None] - d, linewidth), axis=-1)
    norm = np.sum(w * lorentzian(-d, linewidth))
    return num / norm


def saturate_packets(packets: PacketSet, params: RateParams, p_drive: float,
                     drive_detuning: float, thermal_diff: float,
                     model: str = "diffusive") -> PacketSet:
    """New packet set with population differences saturated by a CW drive.

    ``drive_detuning`` is the drive frequency minus the profile centre.
    ``model="packet"`` saturates each packet by its own detuning (hole burning);
    ``model="diffusive"`` gives every packet the line-averaged rate.
    """
    if model == "packet":
        s = steady_state_saturation(params, p_drive, drive_detuning - packets.detuning, thermal_diff)
    elif model == "diffusive":
        eff = p_drive * drive_overlap(packets, drive_detuning, params.linewidth)
        s = np.full(len(packets), float(steady_state_saturation(params, eff, 0.0, thermal_diff)))
    else:
        raise ValueError(f"unknown saturation model {model!r}")
    return packets.with_pop_diff(s)


def am_population_response(params: RateParams, p0, depth: float, f_mod: float,
                           detuning, thermal_diff: float = 1.0):
    """Complex first-harmonic amplitude of s under power modulation p0 (1 + depth cos wt).

    Returns ``depth * ds/dln(p) / (1 + i w tau_eff)``; the static derivative is
    negative, so the quasi-static response is in antiphase with the drive.
    """
    if not 0 <= depth <= 1:
        raise ValueError("depth must lie in [0, 1]")
    if f_mod <= 0:
        raise ValueError("modulation frequency must be positive")
    x = np.asarray(p0, dtype=float) / params.p_sat * lorentzian(detuning, params.linewidth)
    ds_dlnp = -thermal_diff * x / (1.0 + x) ** 2
    tau = params.t1 / (1.0 + x)
    return depth * ds_dlnp / (1.0 + 2j * math.pi * f_mod * tau)
