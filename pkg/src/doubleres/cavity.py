"""Input-output model of a single-port cavity coupled to a spin ensemble.

Conventions: every rate is a FWHM in Hz, detunings are ``probe - resonance``
and the ensemble enters through :func:`doubleres.ensemble.self_energy`.  When a
mode and an ensemble appear together, ``ens_offset`` is the bare mode
frequency minus the ensemble centre.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass

import numpy as np

from . import ensemble as ens
from .ensemble import EnsembleCoupling, InhomProfile, RateParams
from .scan import Axis, ScanResult
from .spinmodel import (
    TransitionId,
    ZeemanSystem,
    population_difference,
    thermal_populations,
    transition_frequency,
)

__all__ = [
    "Polarization",
    "CavityMode",
    "PolaritonBranches",
    "RootFindingError",
    "CoarseGridWarning",
    "reflection",
    "polariton_frequencies",
    "outer_branches",
    "polariton_splitting",
    "arrowhead_matrix",
    "dense_polaritons",
    "anticrossing_map",
    "find_dips",
    "map_splitting",
    "microwave_pull_sweep",
    "linewidth_to_q",
    "q_to_linewidth",
]


class Polarization(enum.Enum):
    TE = "TE"
    TM = "TM"
    MW = "MW"


class RootFindingError(RuntimeError):
    pass


class CoarseGridWarning(UserWarning):
    pass


@dataclass(frozen=True)
class CavityMode:
    nu_c: float
    kappa_int: float
    kappa_ext: float
    polarization: Polarization = Polarization.TE
    m_index: int | None = None

    def __post_init__(self):
        if not self.kappa_int > 0:
            raise ValueError("kappa_int must be positive")
        if self.kappa_ext < 0:
            raise ValueError("kappa_ext must be non-negative")

    @property
    def kappa(self) -> float:
        return self.kappa_int + self.kappa_ext

    @property
    def q(self) -> float:
        return linewidth_to_q(self.nu_c, self.kappa_int)

    @property
    def contrast(self) -> float:
        """On-resonance dip depth 1 - |r(0)|^2 without an ensemble."""
        return 4.0 * self.kappa_int * self.kappa_ext / self.kappa**2


@dataclass(frozen=True)
class PolaritonBranches:
    frequency: np.ndarray
    linewidth: np.ndarray
    photon_fraction: np.ndarray

    def __len__(self) -> int:
        return self.frequency.size


def linewidth_to_q(nu_c: float, kappa_int: float) -> float:
    if nu_c <= 0 or kappa_int <= 0:
        raise ValueError("frequency and linewidth must be positive")
    return nu_c / kappa_int


def q_to_linewidth(nu_c: float, q: float) -> float:
    if nu_c <= 0 or q <= 0:
        raise ValueError("frequency and Q must be positive")
    return nu_c / q


def reflection(mode: CavityMode, delta, coupling: EnsembleCoupling | None = None,
               ens_offset: float = 0.0):
    """Complex reflection amplitude at laser detuning ``delta`` from ``mode.nu_c``."""
    delta = np.asarray(delta, dtype=float)
    denom = 1j * delta + 0.5 * mode.kappa
    if coupling is not None:
        denom = denom + ens.self_energy(coupling, delta + ens_offset)
    return 1.0 - mode.kappa_ext / denom


# ---------------------------------------------------------------------------
# polariton branches


def _secular_terms(coupling: EnsembleCoupling):
    """Distinct packet frequencies with merged couplings, plus decoupled leftovers."""
    p = coupling.packets
    G = coupling.g2
    if np.any(G < 0):
        raise ValueError("branch solving needs non-negative populations (passive ensemble)")
    order = np.argsort(p.detuning, kind="stable")
    d = p.detuning[order]
    G = G[order]
    gam = p.gamma_h[order]
    uniq, start, counts = np.unique(d, return_index=True, return_counts=True)
    Gm = np.add.reduceat(G, start)
    gam_m = np.add.reduceat(gam * G, start)
    with np.errstate(invalid="ignore", divide="ignore"):
        gam_m = np.where(Gm > 0, gam_m / np.where(Gm > 0, Gm, 1), np.add.reduceat(gam, start) / counts)
    coupled = Gm > 0
    # each distinct frequency contributes (multiplicity - 1) dark states, plus
    # one more if the whole group is decoupled
    dark_n = counts - 1 + (~coupled)
    dark_f = np.repeat(uniq, dark_n)
    dark_g = np.repeat(gam_m, dark_n)
    return uniq[coupled], Gm[coupled], gam_m[coupled], dark_f, dark_g


def _solve_intervals(wc, d, G, lo, hi, tol=4e-16, max_iter=200):
    """Roots of x - wc - sum G/(x-d) inside each bracket (lo_j, hi_j).

    Safeguarded Newton on the strictly increasing secular function.
    """
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    x = 0.5 * (lo + hi)
    scale = max(np.max(np.abs(d)) if d.size else 0.0, abs(wc), np.sqrt(np.sum(G)), 1.0)
    step = max(1, (1 << 21) // max(1, d.size))
    active = np.ones(x.size, dtype=bool)
    for _ in range(max_iter):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        f = np.empty(idx.size)
        fp = np.empty(idx.size)
        for i in range(0, idx.size, step):
            xi = x[idx[i:i + step]]
            r = 1.0 / (xi[:, None] - d[None, :])
            f[i:i + step] = xi - wc - np.sum(G * r, axis=1)
            fp[i:i + step] = 1.0 + np.sum(G * r * r, axis=1)
        xa = x[idx]
        pos = f > 0
        hi[idx[pos]] = xa[pos]
        lo[idx[~pos]] = xa[~pos]
        newton = xa - f / fp
        l, h = lo[idx], hi[idx]
        ok = (newton > l) & (newton < h)
        xn = np.where(f == 0, xa, np.where(ok, newton, 0.5 * (l + h)))
        done = (np.abs(xn - xa) <= tol * scale) | (h - l <= tol * scale) | (f == 0)
        x[idx] = xn
        active[idx[done]] = False
    if np.any(active):
        bad = np.nonzero(active)[0]
        raise RootFindingError(
            f"{bad.size} branch roots did not converge; first bracket "
            f"({lo[bad[0]]:.6g}, {hi[bad[0]]:.6g})"
        )
    return x


def _branch_props(x, wc, d, G, gam, kappa):
    r = 1.0 / (x[:, None] - d[None, :])
    w = G * r * r
    norm = 1.0 + np.sum(w, axis=1)
    pf = 1.0 / norm
    lw = (kappa + np.sum(w * gam, axis=1)) / norm
    return lw, pf


def _outer_brackets(wc, d, G):
    rad = 2.0 * np.sqrt(np.sum(G)) + 1.0
    return min(wc, d[0]) - rad - abs(wc - d[0]), max(wc, d[-1]) + rad + abs(wc - d[-1])


def polariton_frequencies(mode: CavityMode, coupling: EnsembleCoupling,
                          ens_offset: float = 0.0) -> PolaritonBranches:
    """All N+1 hybrid modes of the cavity plus N packets (lossless roots).

    Frequencies are absolute (Hz); linewidths are the first-order mixture of
    cavity and packet widths weighted by the eigenvector.
    """
    center = mode.nu_c - ens_offset
    d, G, gam, dark_f, dark_g = _secular_terms(coupling)
    wc = ens_offset
    if d.size == 0:
        x = np.array([wc])
        lw, pf = np.array([mode.kappa]), np.array([1.0])
    else:
        L, U = _outer_brackets(wc, d, G)
        lo = np.concatenate([[L], d])
        hi = np.concatenate([d, [U]])
        x = _solve_intervals(wc, d, G, lo, hi)
        lw, pf = _branch_props(x, wc, d, G, gam, mode.kappa)
    freq = np.concatenate([x, dark_f])
    lw = np.concatenate([lw, dark_g])
    pf = np.concatenate([pf, np.zeros(dark_f.size)])
    order = np.argsort(freq, kind="stable")
    return PolaritonBranches(center + freq[order], lw[order], pf[order])


def outer_branches(mode: CavityMode, coupling: EnsembleCoupling,
                   ens_offset: float = 0.0) -> PolaritonBranches:
    """Only the lowest and highest branch, O(N) per root."""
    center = mode.nu_c - ens_offset
    d, G, gam, _, _ = _secular_terms(coupling)
    wc = ens_offset
    if d.size == 0:
        return PolaritonBranches(np.array([mode.nu_c]), np.array([mode.kappa]), np.array([1.0]))
    L, U = _outer_brackets(wc, d, G)
    x = _solve_intervals(wc, d, G, [L, d[-1]], [d[0], U])
    lw, pf = _branch_props(x, wc, d, G, gam, mode.kappa)
    return PolaritonBranches(center + x, lw, pf)


def polariton_splitting(mode: CavityMode, coupling: EnsembleCoupling,
                        ens_offset: float = 0.0) -> float:
    b = outer_branches(mode, coupling, ens_offset)
    return float(b.frequency[-1] - b.frequency[0])


def arrowhead_matrix(mode: CavityMode, coupling: EnsembleCoupling, ens_offset: float = 0.0):
    """Dense (N+1)x(N+1) lossless Hamiltonian / h in ensemble-centre coordinates."""
    p = coupling.packets
    G = coupling.g2
    if np.any(G < 0):
        raise ValueError("dense oracle needs non-negative populations")
    n = len(p)
    H = np.zeros((n + 1, n + 1))
    H[0, 0] = ens_offset
    H[0, 1:] = H[1:, 0] = np.sqrt(G)
    H[np.arange(1, n + 1), np.arange(1, n + 1)] = p.detuning
    return H


def dense_polaritons(mode: CavityMode, coupling: EnsembleCoupling,
                     ens_offset: float = 0.0) -> PolaritonBranches:
    """Brute-force eigen-solve; O(N^3), intended for small N."""
    H = arrowhead_matrix(mode, coupling, ens_offset)
    vals, vecs = np.linalg.eigh(H)
    weights = np.abs(vecs) ** 2
    widths = np.concatenate([[mode.kappa], coupling.packets.gamma_h])
    lw = weights.T @ widths
    return PolaritonBranches(mode.nu_c - ens_offset + vals, lw, weights[0])


# ---------------------------------------------------------------------------
# maps


def _warn_grid(grid, kappa, what):
    grid = np.asarray(grid, dtype=float)
    if grid.size > 1 and np.max(np.abs(np.diff(grid))) > kappa / 3.0:
        warnings.warn(f"{what} grid step exceeds kappa/3 = {kappa / 3:.4g} Hz; "
                      "narrow dips may be missed", CoarseGridWarning, stacklevel=3)


def _check_sorted(grid, what):
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValueError(f"{what} grid is empty")
    if grid.size > 1 and np.any(np.diff(grid) <= 0):
        raise ValueError(f"{what} grid must be strictly increasing")
    return grid


def optical_coupling_at(sys: ZeemanSystem, transition: TransitionId, B: float,
                        profile: InhomProfile, g_total: float, *, n_packets: int = 4096,
                        gamma_h: float = 1e3, temperature: float = 4.0,
                        optical_power: float = 0.0, rate: RateParams | None = None,
                        population_model: str = "polarization"):
    """Ensemble coupling and centre frequency of ``transition`` at field ``B``.

    Steady-state optical saturation uses the line-centre rate for every packet:
    the laser is swept repeatedly across the whole line, so each packet sees the
    same time-averaged pump.
    """
    center = float(transition_frequency(sys, transition, B)) + profile.center
    state = thermal_populations(sys, B, temperature)
    s = population_difference(state, transition, population_model)
    if optical_power > 0:
        if rate is None:
            raise ValueError("optical saturation needs rate parameters")
        s = float(ens.steady_state_saturation(rate, optical_power, 0.0, s))
    packets = ens.discretize(InhomProfile(0.0, profile.fwhm), n_packets, gamma_h, s)
    return EnsembleCoupling(g_total, packets), center


def anticrossing_map(modes, sys: ZeemanSystem, transitions, b_grid, laser_grid,
                     profile: InhomProfile, g_total: float, *, n_packets: int = 4096,
                     gamma_h: float = 1e3, temperature: float = 4.0,
                     optical_power: float = 0.0, rate: RateParams | None = None,
                     population_model: str = "polarization",
                     reference: float | None = None, workers: int = 1) -> ScanResult:
    """Reflected power |r|^2 over (field, laser detuning).

    ``laser_grid`` is measured from ``reference`` (default: the first mode's
    frequency).  Several modes or transitions may be given; modes are treated
    as independent ports of the same prism (their dip depths add), transitions
    add their self-energies.
    """
    modes = [modes] if isinstance(modes, CavityMode) else list(modes)
    transitions = [transitions] if isinstance(transitions, TransitionId) else list(transitions)
    b_grid = _check_sorted(b_grid, "field")
    laser_grid = _check_sorted(laser_grid, "laser")
    _warn_grid(laser_grid, min(m.kappa for m in modes), "laser")
    ref = modes[0].nu_c if reference is None else reference

    def row(B):
        couplings = [optical_coupling_at(sys, t, B, profile, g_total, n_packets=n_packets,
                                         gamma_h=gamma_h, temperature=temperature,
                                         optical_power=optical_power, rate=rate,
                                         population_model=population_model)
                     for t in transitions]
        laser = ref + laser_grid
        total = np.zeros(laser.size, dtype=complex)
        for m in modes:
            denom = 1j * (laser - m.nu_c) + 0.5 * m.kappa
            for c, center in couplings:
                denom = denom + ens.self_energy(c, laser - center)
            total += m.kappa_ext / denom
        return np.abs(1.0 - total) ** 2

    rows = _map_rows(row, b_grid, workers)
    return ScanResult(
        Axis("field", "T", b_grid), np.vstack(rows), name="reflectance", unit="",
        axis2=Axis("laser_detuning", "Hz", laser_grid),
        metadata={"reference": ref},
    )


def _map_rows(fn, grid, workers):
    if workers <= 1:
        return [fn(x) for x in grid]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, grid))


def find_dips(x, y, count: int = 2, min_separation: float = 0.0):
    """Positions of the ``count`` deepest local minima of ``y(x)``.

    Each minimum is refined with a three-point parabola; results are returned
    in ascending ``x``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    interior = np.nonzero((y[1:-1] < y[:-2]) & (y[1:-1] <= y[2:]))[0] + 1
    interior = interior[np.argsort(y[interior], kind="stable")]
    chosen = []
    for i in interior:
        if all(abs(x[i] - x[j]) > min_separation for j in chosen):
            chosen.append(i)
        if len(chosen) == count:
            break
    out = []
    for i in chosen:
        y0, y1, y2 = y[i - 1], y[i], y[i + 1]
        denom = y0 - 2 * y1 + y2
        shift = 0.5 * (y0 - y2) / denom if denom != 0 else 0.0
        out.append(x[i] + shift * (x[i + 1] - x[i - 1]) / 2.0)
    return np.sort(np.array(out))


def map_splitting(scan: ScanResult, min_separation: float = 0.0) -> np.ndarray:
    """Separation of the two deepest dips in every field row (NaN if < 2 dips)."""
    out = np.full(len(scan.axis1), np.nan)
    x = scan.axis2.values
    for i, row in enumerate(scan.values):
        dips = find_dips(x, row, 2, min_separation)
        if dips.size == 2:
            out[i] = dips[1] - dips[0]
    return out


def microwave_pull_sweep(mw_mode: CavityMode, sys: ZeemanSystem, coupling: EnsembleCoupling,
                         b_grid) -> ScanResult:
    """Dispersive pull of the microwave mode across a field sweep (EPR curve)."""
    b_grid = _check_sorted(b_grid, "field")
    nu12 = transition_frequency(sys, TransitionId.MW_12, b_grid)
    pull = ens.dispersive_pull(coupling, mw_mode.nu_c - nu12)
    return ScanResult(Axis("field", "T", b_grid), pull, name="pull", unit="Hz",
                      metadata={"detuning": mw_mode.nu_c - nu12})
