"""Least-squares fitting and the spectroscopic models built on it.

The engine is a small Levenberg-Marquardt loop with a central-difference
Jacobian; it is deliberately self-contained so that all fits share one
convergence rule and one covariance convention (residual-scaled, as in
``scipy.optimize.curve_fit`` with ``absolute_sigma=False``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import jv

from .ensemble import FWHM_TO_SIGMA, lorentzian

__all__ = [
    "FitError",
    "ConvergenceError",
    "SingularFitError",
    "FitDomainError",
    "FitResult",
    "FsrTable",
    "least_squares",
    "gaussian_derivative",
    "fit_gaussian_derivative",
    "saturation_curve",
    "fit_saturation",
    "reflection_power",
    "fit_reflection_dip",
    "sideband_spectra",
    "coincidence_metric",
    "extract_fsr_sideband",
    "gvd_from_fsrs",
    "fs2_per_m",
]

fs2_per_m = 1e-30  # s^2/m per fs^2/m


class FitError(RuntimeError):
    pass


class ConvergenceError(FitError):
    pass


class SingularFitError(FitError):
    pass


class FitDomainError(FitError, ValueError):
    """Data do not support the requested model (e.g. missing extrema)."""


@dataclass
class FitResult:
    params: dict[str, float]
    stderr: dict[str, float] | None
    residual_norm: float
    n_iter: int
    converged: bool
    derived: dict[str, float] = field(default_factory=dict)
    derived_stderr: dict[str, float] = field(default_factory=dict)
    cost_history: list[float] = field(default_factory=list)
    covariance: np.ndarray | None = None
    warnings: list[str] = field(default_factory=list)
    alternatives: list["FitResult"] = field(default_factory=list)

    def __getitem__(self, name: str) -> float:
        if name in self.params:
            return self.params[name]
        return self.derived[name]

    def err(self, name: str) -> float:
        if self.stderr is None:
            return math.nan
        if name in self.stderr:
            return self.stderr[name]
        return self.derived_stderr.get(name, math.nan)


# ---------------------------------------------------------------------------
# engine


def _jacobian(fun, p, f0):
    J = np.empty((f0.size, p.size))
    for j in range(p.size):
        h = 1e-6 * (abs(p[j]) if p[j] != 0 else 1.0)
        pp = p.copy()
        pm = p.copy()
        pp[j] += h
        pm[j] -= h
        J[:, j] = (fun(pp) - fun(pm)) / (2.0 * h)
    return J


def least_squares(model: Callable, x, y, p0: Sequence[float], *, sigma=None,
                  names: Sequence[str] | None = None, max_iter: int = 200,
                  raise_on_failure: bool = True) -> FitResult:
    """Minimise ``sum(((y - model(x, p)) / sigma)**2) / 2`` from ``p0``.

    ``model`` may return real or complex values; complex residuals are split
    into real and imaginary parts.
    """
    x = np.asarray(x)
    y = np.asarray(y)
    p = np.array(p0, dtype=float)
    if not np.all(np.isfinite(p)):
        raise ValueError("initial guess must be finite")
    names = list(names) if names is not None else [f"p{i}" for i in range(p.size)]
    if len(names) != p.size:
        raise ValueError("one name per parameter")
    w = 1.0 / np.asarray(sigma, dtype=float) if sigma is not None else np.ones(y.shape)

    def resid_vec(q):
        r = (y - model(x, q)) * w
        return np.concatenate([r.real.ravel(), r.imag.ravel()]) if np.iscomplexobj(r) else r.ravel()

    r = resid_vec(p)
    if r.size < p.size:
        raise ValueError("fewer data points than parameters")
    cost = 0.5 * float(r @ r)
    history = [cost]
    lam = 1e-3
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        if cost == 0.0:
            converged = True
            break
        # residual is y - f, so d(resid)/dp = -J_model
        J = -_jacobian(resid_vec, p, r)
        A = J.T @ J
        g = J.T @ r
        diag = np.diag(A).copy()
        if np.any(diag == 0) or not np.all(np.isfinite(A)):
            raise SingularFitError(f"parameter(s) with no influence on the residual: "
                                   f"{[n for n, d in zip(names, diag) if d == 0]}")
        accepted = False
        for _ in range(40):
            try:
                step = np.linalg.solve(A + lam * np.diag(diag), g)
            except np.linalg.LinAlgError as exc:
                raise SingularFitError("singular normal equations") from exc
            p_new = p + step
            # trial points far outside the model's range are rejected, not reported
            with np.errstate(over="ignore", invalid="ignore"):
                r_new = resid_vec(p_new)
                cost_new = 0.5 * float(r_new @ r_new)
            if np.isfinite(cost_new) and cost_new <= cost:
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            converged = True  # no descent direction left at machine precision
            break
        rel_step = np.linalg.norm(step) / max(np.linalg.norm(p), 1e-300)
        rel_cost = (cost - cost_new) / max(cost, 1e-300)
        p, r, cost = p_new, r_new, cost_new
        history.append(cost)
        lam = max(lam / 10.0, 1e-12)
        if rel_step < 1e-10 or rel_cost < 1e-12:
            converged = True
            break
    if not converged and raise_on_failure:
        raise ConvergenceError(f"no convergence after {max_iter} iterations")

    stderr = None
    cov = None
    if converged:
        J = _jacobian(resid_vec, p, r)
        sv = np.linalg.svd(J, compute_uv=False)
        dof = r.size - p.size
        if sv[-1] > sv[0] * 1e-12 and dof > 0:
            cov = np.linalg.inv(J.T @ J) * (2.0 * cost / dof)
            stderr = dict(zip(names, np.sqrt(np.diag(cov))))
    return FitResult(dict(zip(names, p.tolist())), stderr, math.sqrt(2.0 * cost), it,
                     converged, cost_history=history, covariance=cov)


# ---------------------------------------------------------------------------
# derivative of a Gaussian (EPR line)


def gaussian_derivative(x, amplitude, center, sigma, offset):
    u = np.asarray(x, dtype=float) - center
    return -amplitude * u / sigma**2 * np.exp(-0.5 * (u / sigma) ** 2) + offset


def fit_gaussian_derivative(x, y, sigma_y=None) -> FitResult:
    """Fit ``-A (x-x0)/s^2 exp(-(x-x0)^2/2s^2) + c``.

    Reports ``fwhm`` of the underlying Gaussian, the peak-to-peak value
    ``2 A exp(-1/2) / s`` and the extremum separation ``2 s`` as derived
    quantities.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 5:
        raise FitDomainError("need at least five points")
    order = np.argsort(x)
    x, y = x[order], y[order]
    if sigma_y is not None:
        sigma_y = np.asarray(sigma_y, dtype=float)[order]
    i_hi, i_lo = int(np.argmax(y)), int(np.argmin(y))
    edge = {0, x.size - 1}
    if i_hi in edge or i_lo in edge:
        raise FitDomainError("data do not bracket both extrema")

    # work in scaled units so the Jacobian is well conditioned
    xs = 0.5 * (x[-1] - x[0])
    xm = 0.5 * (x[-1] + x[0])
    ys = max(np.ptp(y), 1e-300)
    u = (x - xm) / xs
    v = y / ys
    sig0 = 0.5 * abs(u[i_lo] - u[i_hi])
    c0 = 0.5 * (u[i_lo] + u[i_hi])
    half_pp = 0.5 * (v[i_hi] - v[i_lo])
    a0 = math.copysign(half_pp * sig0 * math.exp(0.5), u[i_lo] - u[i_hi])
    off0 = 0.5 * (v[i_hi] + v[i_lo])
    fit = least_squares(lambda t, p: gaussian_derivative(t, *p), u, v,
                        [a0, c0, sig0, off0],
                        sigma=None if sigma_y is None else sigma_y / ys,
                        names=["amplitude", "center", "sigma", "offset"])
    a, c, s, off = (fit.params[k] for k in ("amplitude", "center", "sigma", "offset"))
    s = abs(s)
    scale = {"amplitude": ys * xs, "center": xs, "sigma": xs, "offset": ys}
    params = {
        "amplitude": a * scale["amplitude"],
        "center": c * xs + xm,
        "fwhm": s * xs / FWHM_TO_SIGMA,
        "offset": off * ys,
    }
    derived = {
        "sigma": s * xs,
        "peak_to_peak": 2.0 * abs(a) * math.exp(-0.5) / s * ys,
        "extremum_separation": 2.0 * s * xs,
    }
    stderr = dstd = None
    if fit.stderr is not None:
        e = fit.stderr
        stderr = {
            "amplitude": e["amplitude"] * scale["amplitude"],
            "center": e["center"] * xs,
            "fwhm": e["sigma"] * xs / FWHM_TO_SIGMA,
            "offset": e["offset"] * ys,
        }
        # peak-to-peak = 2 e^-1/2 |a|/s: propagate with the covariance
        cov = fit.covariance
        grad = np.array([1.0 / s, 0.0, -abs(a) / s**2, 0.0]) * 2.0 * math.exp(-0.5) * ys
        grad[0] *= math.copysign(1.0, a)
        dstd = {
            "sigma": e["sigma"] * xs,
            "peak_to_peak": float(math.sqrt(max(grad @ cov @ grad, 0.0))),
            "extremum_separation": 2.0 * e["sigma"] * xs,
        }
    return FitResult(params, stderr, fit.residual_norm * ys, fit.n_iter, fit.converged,
                     derived, dstd or {}, fit.cost_history, fit.covariance)


# ---------------------------------------------------------------------------
# saturation law


def saturation_curve(p, dnu_max, p_sat, form: str = "rise"):
    with np.errstate(over="ignore"):
        e = np.exp(-np.asarray(p, dtype=float) / p_sat)
    if form == "rise":
        return dnu_max * (1.0 - e)
    if form == "decay":
        return dnu_max * e
    raise ValueError(f"unknown saturation form {form!r}")


def fit_saturation(p_watts, dnu, sigma=None, form: str = "auto") -> FitResult:
    """Fit the exponential saturation law in linear power.

    ``form="rise"`` is ``dnu_max (1 - exp(-P/P_sat))`` (a response that grows
    and saturates); ``"decay"`` is ``dnu_max exp(-P/P_sat)`` (a response that
    saturates towards zero). ``"auto"`` picks by the trend of the data.
    ``p_sat`` is reported in W and, as a derived value, in dBm.
    """
    p = np.asarray(p_watts, dtype=float)
    y = np.asarray(dnu, dtype=float)
    if p.size < 3:
        raise FitDomainError("need at least three powers")
    if np.any(p <= 0):
        raise FitDomainError("powers must be positive")
    order = np.argsort(p)
    p, y = p[order], y[order]
    if sigma is not None:
        sigma = np.asarray(sigma, dtype=float)[order]
    if form == "auto":
        form = "rise" if abs(y[-1]) > abs(y[0]) else "decay"
    scale_p = float(np.median(p))
    scale_y = max(float(np.max(np.abs(y))), 1e-300)
    q = p / scale_p
    v = y / scale_y
    # initial guess: level from the saturated end, P_sat from the 1/e crossing
    if form == "rise":
        level = v[-1]
        frac = 1.0 - v / level
    else:
        level = v[0] / math.exp(-q[0]) if q[0] < 1 else v[0]
        frac = v / level
    target = math.exp(-1.0)
    idx = np.nonzero(frac < target)[0]
    ps0 = float(q[idx[0]]) if idx.size else float(q[-1])
    best = None
    for start in (ps0, ps0 * 3.0, ps0 / 3.0):
        try:
            f = least_squares(lambda t, pp: saturation_curve(t, pp[0], pp[1], form), q, v,
                              [level, start], sigma=None if sigma is None else sigma / scale_y,
                              names=["dnu_max", "p_sat"])
        except FitError:
            continue
        if best is None or f.residual_norm < best.residual_norm:
            best = f
    if best is None:
        raise ConvergenceError("saturation fit failed from every start")
    dmax = best.params["dnu_max"] * scale_y
    ps = abs(best.params["p_sat"]) * scale_p
    params = {"dnu_max": dmax, "p_sat": ps}
    derived = {"p_sat_dbm": 10.0 * math.log10(ps / 1e-3)}
    stderr = None
    dstd: dict[str, float] = {}
    if best.stderr is not None:
        stderr = {"dnu_max": best.stderr["dnu_max"] * scale_y,
                  "p_sat": best.stderr["p_sat"] * scale_p}
        dstd = {"p_sat_dbm": 10.0 / math.log(10.0) * stderr["p_sat"] / ps}
    res = FitResult(params, stderr, best.residual_norm * scale_y, best.n_iter,
                    best.converged, derived, dstd, best.cost_history, best.covariance)
    res.derived["form_is_rise"] = 1.0 if form == "rise" else 0.0
    if p[-1] < 0.5 * ps or (stderr is not None and stderr["dnu_max"] > abs(dmax)):
        res.warnings.append("dnu_max unidentifiable: powers do not reach saturation")
    return res


# ---------------------------------------------------------------------------
# reflection dip


def reflection_power(delta, nu_c, kappa_int, kappa_ext):
    d = np.asarray(delta, dtype=float) - nu_c
    k = kappa_int + kappa_ext
    return (d * d + 0.25 * (kappa_int - kappa_ext) ** 2) / (d * d + 0.25 * k * k)


def _reflection_amp(delta, nu_c, kappa_int, kappa_ext):
    d = np.asarray(delta, dtype=float) - nu_c
    return 1.0 - kappa_ext / (1j * d + 0.5 * (kappa_int + kappa_ext))


def fit_reflection_dip(freq, spectrum, sigma=None) -> FitResult:
    """Fit a single-port reflection dip.

    With real ``spectrum`` (``|r|^2``) the two coupling regimes are
    indistinguishable: the under-coupled solution is returned and the swapped
    one is attached in ``alternatives``. Complex ``spectrum`` (amplitude
    reflection) selects the regime by the phase.
    """
    f = np.asarray(freq, dtype=float)
    s = np.asarray(spectrum)
    complex_data = np.iscomplexobj(s)
    power = np.abs(s) ** 2 if complex_data else s.astype(float)
    n = f.size
    if n < 10:
        raise FitDomainError("spectrum too short")
    edge = max(2, n // 10)
    wings = np.concatenate([power[:edge], power[-edge:]])
    noise = float(np.std(wings))
    base = float(np.median(wings))
    i0 = int(np.argmin(power))
    contrast = 1.0 - power[i0] / base
    if contrast <= 3.0 * noise / max(base, 1e-300):
        raise FitDomainError(f"dip contrast {contrast:.3g} not above the noise floor")
    half = 1.0 - 0.5 * contrast
    below = np.nonzero(power / base <= half)[0]
    kappa0 = max(float(f[below[-1]] - f[below[0]]), float(np.median(np.diff(f))))
    span = f[-1] - f[0]
    if span < 5.0 * kappa0:
        raise FitDomainError("spectrum covers fewer than five linewidths")
    root = math.sqrt(max(1.0 - contrast, 0.0))
    under = (0.5 * kappa0 * (1 + root), 0.5 * kappa0 * (1 - root))
    over = under[::-1]
    fscale = kappa0
    fc0 = float(f[i0])
    u = (f - fc0) / fscale

    def fit_from(ki, ke):
        if complex_data:
            model = lambda t, p: _reflection_amp(t, p[0], p[1], p[2])
            data = s
        else:
            model = lambda t, p: reflection_power(t, p[0], p[1], p[2])
            data = power
        return least_squares(model, u, data, [0.0, ki / fscale, max(ke, 1e-3 * kappa0) / fscale],
                             sigma=sigma, names=["nu_c", "kappa_int", "kappa_ext"])

    def to_result(fit):
        p = fit.params
        params = {"nu_c": fc0 + p["nu_c"] * fscale, "kappa_int": abs(p["kappa_int"]) * fscale,
                  "kappa_ext": abs(p["kappa_ext"]) * fscale}
        err = None if fit.stderr is None else {k: v * fscale for k, v in fit.stderr.items()}
        return FitResult(params, err, fit.residual_norm, fit.n_iter, fit.converged,
                         {"contrast": contrast}, {}, fit.cost_history, fit.covariance)

    a = to_result(fit_from(*under))
    if complex_data:
        b = to_result(fit_from(*over))
        return a if a.residual_norm <= b.residual_norm else b
    if a.params["kappa_ext"] > a.params["kappa_int"]:
        a.params["kappa_int"], a.params["kappa_ext"] = a.params["kappa_ext"], a.params["kappa_int"]
        if a.stderr:
            a.stderr["kappa_int"], a.stderr["kappa_ext"] = a.stderr["kappa_ext"], a.stderr["kappa_int"]
    swapped = FitResult(dict(a.params, kappa_int=a.params["kappa_ext"], kappa_ext=a.params["kappa_int"]),
                        None if a.stderr is None else dict(a.stderr, kappa_int=a.stderr["kappa_ext"],
                                                           kappa_ext=a.stderr["kappa_int"]),
                        a.residual_norm, a.n_iter, a.converged, dict(a.derived))
    a.alternatives.append(swapped)
    a.warnings.append("coupling regime ambiguous without phase data")
    return a


# ---------------------------------------------------------------------------
# sideband spectroscopy


def sideband_spectra(mod_freqs, detuning, fsr: float, kappa: float, *,
                     carrier_contrast: float = 0.5, sideband_contrast: float = 0.5,
                     mod_index: float = 1.0, sideband_kappa: float | None = None):
    """Transmission of a phase-modulated laser swept across mode ``m``.

    The carrier dips on mode ``m`` at zero detuning; the upper sideband dips on
    mode ``m+1`` when ``detuning + mod_freq = fsr``. Shape (n_mod, n_detuning).
    """
    f = np.asarray(mod_freqs, dtype=float)[:, None]
    d = np.asarray(detuning, dtype=float)[None, :]
    ks = kappa if sideband_kappa is None else sideband_kappa
    c = jv(0, mod_index) ** 2 * carrier_contrast * lorentzian(d, kappa)
    sb = jv(1, mod_index) ** 2 * sideband_contrast * lorentzian(d + f - fsr, ks)
    return 1.0 - c - sb


def coincidence_metric(detuning, transmission) -> np.ndarray:
    """Spectral spread (second central moment) of the absorption in each row.

    Two dips at separation ``d`` add ``w1 w2 d^2 / (w1 + w2)^2`` to the spread,
    so the metric has its stationary minimum where the dips coincide whatever
    their relative contrasts.
    """
    d = np.asarray(detuning, dtype=float)
    T = np.atleast_2d(np.asarray(transmission, dtype=float))
    a = T.max(axis=1, keepdims=True) - T
    wsum = a.sum(axis=1)
    c = (a * d).sum(axis=1) / wsum
    return (a * (d[None, :] - c[:, None]) ** 2).sum(axis=1) / wsum


def extract_fsr_sideband(mod_freqs, detuning, spectra, kappa: float | None = None):
    """Modulation frequency at which carrier and sideband dips coincide.

    Returns ``(fsr, uncertainty)`` in Hz. A parabola is fitted to the metric
    around its grid minimum; the uncertainty is that fit's 1-sigma error on
    the vertex.
    """
    f = np.asarray(mod_freqs, dtype=float)
    if f.size < 3 or np.any(np.diff(f) <= 0):
        raise ValueError("need at least three increasing modulation frequencies")
    m = coincidence_metric(detuning, spectra)
    i = int(np.argmin(m))
    if i == 0 or i == f.size - 1:
        raise FitDomainError("no dip coincidence inside the modulation grid")
    lo, hi = max(0, i - 3), min(f.size, i + 4)
    ff, mm = f[lo:hi], m[lo:hi]
    f0 = f[i]
    scale = max(abs(ff[-1] - ff[0]), 1e-300)
    t = (ff - f0) / scale
    if t.size > 3:
        coef, cov = np.polyfit(t, mm, 2, cov="unscaled")
        resid = mm - np.polyval(coef, t)
        dof = t.size - 3
        cov = cov * float(resid @ resid) / dof if dof > 0 else cov * 0.0
    else:
        coef = np.polyfit(t, mm, 2)
        cov = np.zeros((3, 3))
    a, b, _ = coef
    if a <= 0:
        raise FitDomainError("metric has no minimum near the grid optimum")
    vertex = -b / (2.0 * a)
    g = np.array([b / (2.0 * a * a), -1.0 / (2.0 * a), 0.0])
    err = math.sqrt(max(float(g @ cov @ g), 0.0)) * scale
    fsr = f0 + vertex * scale
    if kappa is not None and err > 0.5 * kappa:
        raise FitDomainError(f"FSR uncertainty {err:.3g} Hz exceeds half a linewidth")
    return fsr, err


# ---------------------------------------------------------------------------
# dispersion from FSR tables


@dataclass(frozen=True)
class FsrTable:
    """FSRs of consecutive modes; row ``i`` is ``nu_{m+1} - nu_m`` at offset ``m``."""

    offsets: np.ndarray
    fsr: np.ndarray
    uncertainty: np.ndarray

    def __post_init__(self):
        o = np.asarray(self.offsets, dtype=int)
        f = np.asarray(self.fsr, dtype=float)
        u = np.broadcast_to(np.asarray(self.uncertainty, dtype=float), f.shape).copy()
        if o.shape != f.shape or o.ndim != 1 or o.size == 0:
            raise ValueError("offsets and fsr must be equal-length 1-D arrays")
        order = np.argsort(o)
        o, f, u = o[order], f[order], u[order]
        if np.any(np.diff(o) != 1):
            raise ValueError("mode offsets must be consecutive")
        if np.any(f <= 0):
            raise ValueError("FSRs must be positive")
        for name, a in (("offsets", o), ("fsr", f), ("uncertainty", u)):
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def delta_fsr(self) -> np.ndarray:
        """FSR_m - FSR_{m-1}; NaN for the lowest row."""
        return np.concatenate([[np.nan], np.diff(self.fsr)])


def gvd_from_fsrs(table: FsrTable, radius: float):
    """GVD per row (s^2/m) and its 1-sigma uncertainty.

    ``beta2 = -dFSR / ((2 pi)^2 R FSRbar^3)`` with ``FSRbar`` the mean of the
    two FSRs entering ``dFSR``.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    f = table.fsr
    u = table.uncertainty
    beta = np.full(f.size, np.nan)
    err = np.full(f.size, np.nan)
    c = 1.0 / ((2.0 * math.pi) ** 2 * radius)
    f1, f0 = f[1:], f[:-1]
    mean = 0.5 * (f1 + f0)
    d = f1 - f0
    beta[1:] = -c * d / mean**3
    # partial derivatives with respect to the two FSRs
    db_df1 = -c * (1.0 / mean**3 - 1.5 * d / mean**4)
    db_df0 = -c * (-1.0 / mean**3 - 1.5 * d / mean**4)
    err[1:] = np.hypot(db_df1 * u[1:], db_df0 * u[:-1])
    return beta, err
