"""Output energy-flux spectrum, linewidth extraction and the Born-Markov reference."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import curve_fit

from .airy import Z_MAX, airy_ai
from .core import ComplexSeries, NumericalError, PhysicalParams, derive_constants
from .kernel import coupling_kappa


class SpectrumError(NumericalError):
    """Spectrum unusable for linewidth extraction; ``diagnostics`` holds the evidence."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass(frozen=True, eq=False)
class SpectrumResult:
    omega: np.ndarray
    flux: np.ndarray
    gamma_fwhm: float
    peak_omega: float
    method: str
    kbar_variation: float


@dataclass(frozen=True, eq=False)
class BmaBaseline:
    gamma_bm: float
    Gamma_bm: float
    omega: np.ndarray
    lorentzian: np.ndarray


@dataclass(frozen=True)
class ExpFit:
    gamma: float
    nu: float
    omega_shift: float
    residual: float


def airy_normalization(params: PhysicalParams) -> float:
    """Prefactor making the Airy output modes delta(omega - omega')-normalized."""
    beta = derive_constants(params).beta
    return beta * math.sqrt(params.hbar / (params.m * params.g))


def coupling_strength_kbar(omega_p, params: PhysicalParams, bound: float = 6.0,
                           points_per_wave: float = 24.0) -> np.ndarray:
    """Overlap of the coupling profile with the Airy output mode of energy hbar*omega_p.

    Trapezoidal quadrature over |x| <= bound/sigma_k. The step resolves both
    the Gaussian and the shortest local Airy wavelength on the window. Where
    the Airy argument exceeds 40 the mode is below 1e-70 and is dropped.
    """
    if params.g <= 0:
        raise ValueError("Airy output modes need g > 0; the free-space case is not supported")
    beta = derive_constants(params).beta
    omega_p = np.atleast_1d(np.asarray(omega_p, dtype=float))
    x_max = bound / params.sigma_k
    shift = params.hbar * omega_p / (params.m * params.g)
    z_min = beta * (-x_max - shift.max())
    if z_min < -Z_MAX:
        raise ValueError("omega_p too large: Airy argument leaves the supported range")
    k_airy = beta * math.sqrt(max(-z_min, 1.0))
    dx = min(0.05 / params.sigma_k, 2 * math.pi / (points_per_wave * k_airy))
    n = int(math.ceil(2 * x_max / dx)) + 1
    x = np.linspace(-x_max, x_max, n)
    kappa = coupling_kappa(x, params)
    out = np.empty(omega_p.size)
    for lo in range(0, omega_p.size, 256):
        z = beta * (x[None, :] - shift[lo:lo + 256, None])
        ai = np.zeros_like(z)
        live = z <= Z_MAX
        ai[live] = airy_ai(z[live])
        y = ai * kappa
        out[lo:lo + 256] = (x[1] - x[0]) * (y.sum(axis=1) - 0.5 * (y[:, 0] + y[:, -1]))
    return airy_normalization(params) * out


def kbar_squared(omega, params: PhysicalParams, max_direct: int = 512) -> np.ndarray:
    """|kbar|^2 on a frequency grid.

    Dense grids are served from a cubic spline through 257 direct evaluations;
    |kbar|^2 varies on scales of hundreds of rad/s, far wider than any window.
    """
    omega = np.asarray(omega, dtype=float)
    if omega.size <= max_direct:
        return coupling_strength_kbar(omega, params) ** 2
    nodes = np.linspace(omega.min(), omega.max(), 257)
    return CubicSpline(nodes, coupling_strength_kbar(nodes, params) ** 2)(omega)


def _panel_weights(theta):
    """Integrals of exp(-i theta u) (1-u) and exp(-i theta u) u over u in [0, 1]."""
    c = -1j * np.asarray(theta, dtype=float)
    small = np.abs(c) < 1e-2
    safe = np.where(small, 1.0, c)
    e = np.exp(safe)
    b = e / safe - (e - 1) / safe**2
    a = (e - 1) / safe - b
    b_series = 0.5 + c / 3 + c**2 / 8 + c**3 / 30 + c**4 / 144
    a_series = 0.5 + c / 6 + c**2 / 24 + c**3 / 120 + c**4 / 720
    return np.where(small, a_series, a), np.where(small, b_series, b)


def one_sided_transform(corr: ComplexSeries, omega: np.ndarray, carrier: float | None = None,
                        max_change: float = 0.01) -> np.ndarray:
    """Re int_0^tau_max exp(-i omega tau) C(tau) d tau.

    C is demodulated at ``carrier`` (default: centre of the omega window) and
    the slowly varying remainder D is treated with the trapezoidal rule's
    piecewise-linear model, while the residual phase exp(-i (omega - carrier) tau)
    is integrated exactly on each panel. For (omega - carrier) * h -> 0 this is
    the plain trapezoidal rule. Panels span q samples, with q chosen so that D
    changes by at most ``max_change`` (relative) per panel.
    """
    omega = np.asarray(omega, dtype=float)
    if carrier is None:
        carrier = 0.5 * (omega.min() + omega.max())
    dtau = corr.grid.dt
    tau = corr.times
    d = corr.values * np.exp(-1j * carrier * tau)
    mag = np.maximum(np.abs(d[:-1]), np.abs(d[1:]))
    rate = np.max(np.abs(np.diff(d)) / np.where(mag > 0, mag, 1.0)) / dtau
    q = max(1, int(max_change / (rate * dtau))) if rate > 0 else tau.size - 1
    q = min(q, tau.size - 1)
    n_used = (tau.size - 1) // q * q + 1
    tk = tau[:n_used:q]
    dk = d[:n_used:q]
    h = q * dtau
    out = np.empty(omega.size)
    for lo in range(0, omega.size, 128):
        dw = omega[lo:lo + 128] - carrier
        total = np.exp(-1j * np.outer(dw, tk)) @ dk
        a, b = _panel_weights(dw * h)
        last = np.exp(-1j * dw * tk[-1]) * dk[-1]
        val = h * (a * (total - last) + b * np.exp(1j * dw * h) * (total - dk[0]))
        out[lo:lo + 128] = val.real
    return out


def linewidth_fwhm(omega: np.ndarray, flux: np.ndarray) -> float:
    """Full width at half maximum, interpolating linearly at both crossings."""
    omega = np.asarray(omega, float)
    flux = np.asarray(flux, float)
    i_pk = int(np.argmax(flux))
    half = 0.5 * flux[i_pk]
    above = flux >= half
    edges = np.flatnonzero(np.diff(above.astype(int)) != 0)
    diag = {"omega": omega.tolist(), "flux": flux.tolist(), "crossings": edges.tolist()}
    if above[0] or above[-1]:
        raise SpectrumError("half maximum is not bracketed by the frequency window; "
                            "use a longer horizon or a wider window", diag)
    if edges.size != 2:
        raise SpectrumError(f"spectrum is not unimodal: {edges.size} half-maximum crossings",
                            diag)
    i, j = edges

    def cross(k):
        f0, f1 = flux[k], flux[k + 1]
        return omega[k] + (half - f0) * (omega[k + 1] - omega[k]) / (f1 - f0)

    return float(cross(j) - cross(i))


def _peak(omega, flux):
    i = int(np.argmax(flux))
    if 0 < i < omega.size - 1:
        y0, y1, y2 = flux[i - 1:i + 2]
        den = y0 - 2 * y1 + y2
        if den != 0:
            return float(omega[i] + 0.5 * (y0 - y2) / den * (omega[1] - omega[0]))
    return float(omega[i])


def output_flux_spectrum(corr: ComplexSeries, omega: np.ndarray, params: PhysicalParams,
                         weighted: bool = True, decay_floor: float = 1e-3,
                         carrier: float | None = None) -> SpectrumResult:
    """Peak-normalized output flux 2|kbar|^2 Re int exp(-i w tau) C(tau) d tau."""
    omega = np.asarray(omega, dtype=float)
    c = corr.values
    if abs(c[-1]) > decay_floor * abs(c[0]):
        raise SpectrumError(
            f"correlation has only decayed to {abs(c[-1]) / abs(c[0]):.2e} of C(0) by "
            f"tau_max = {corr.grid.t_max:g} s; use a longer horizon"
        )
    raw = one_sided_transform(corr, omega, carrier)
    if weighted:
        kb2 = kbar_squared(omega, params)
        raw = 2 * kb2 * raw
    flux = raw / raw.max()
    gamma = linewidth_fwhm(omega, flux)
    peak = _peak(omega, flux)
    variation = 0.0
    if weighted:
        window = np.abs(omega - peak) <= 0.5 * gamma
        kw = kb2[window]
        variation = float((kw.max() - kw.min()) / kw.max())
        if np.any(flux[window] < 0):
            raise SpectrumError("negative flux inside the FWHM window")
    return SpectrumResult(omega, flux, gamma, peak, "fft_fwhm", variation)


def linewidth_expfit(amplitude: ComplexSeries, P: float, tail: float = 1 / 3,
                     max_residual: float = 1e-2) -> ExpFit:
    """Decay rate from a straight-line fit to log|N(t)| + P t over the final third.

    Pass the rotating-frame N with its pump parameter, or the envelope with
    P = 0. Gamma is the FWHM 2|nu| of the Lorentzian an exponentially decaying
    correlation produces. ``omega_shift`` is the slope of the unwrapped phase.
    """
    t = amplitude.times
    start = int(len(t) * (1 - tail))
    tt = t[start:]
    vals = amplitude.values[start:]
    if np.any(vals == 0):
        raise SpectrumError("amplitude underflowed; fit the envelope instead")
    logmod = np.log(np.abs(vals)) + P * tt
    slope, icpt = np.polyfit(tt, logmod, 1)
    resid = logmod - (slope * tt + icpt)
    drop = abs(slope) * (tt[-1] - tt[0])
    rel = float(np.max(np.abs(resid)) / drop) if drop > 0 else math.inf
    if not rel < max_residual:
        raise SpectrumError("horizon too short or non-exponential decay "
                            f"(relative residual {rel:.3g})")
    phase = np.unwrap(np.angle(vals))
    shift = np.polyfit(tt, phase, 1)[0]
    return ExpFit(2 * abs(slope), float(slope), float(shift), rel)


def lorentzian(omega, centre, hwhm):
    return hwhm**2 / ((np.asarray(omega) - centre) ** 2 + hwhm**2)


def bma_baseline(r: float, n_bar: float, n_s: float, omega: np.ndarray,
                 omega0: float) -> BmaBaseline:
    """Born-Markov damping r/(n_bar + n_s) and linewidth r/(4 n_bar^2).

    The linewidth is the decay rate of <a^dag>, so the reference Lorentzian
    has that half width at half maximum.
    """
    if not n_bar > 0:
        raise ValueError("n_bar must be positive")
    width = r / (4 * n_bar**2)
    omega = np.asarray(omega, dtype=float)
    return BmaBaseline(r / (n_bar + n_s), width, omega, lorentzian(omega, omega0, width))


def lorentzian_residual(spec: SpectrumResult, span: float = 2.0) -> tuple[float, float, float]:
    """Best-fit unit Lorentzian within +-span*FWHM of the peak.

    Returns (max |residual| relative to peak, fitted centre, fitted HWHM).
    """
    window = np.abs(spec.omega - spec.peak_omega) <= span * spec.gamma_fwhm
    w, y = spec.omega[window], spec.flux[window]

    def model(om, amp, centre, hwhm):
        return amp * lorentzian(om, centre, hwhm)

    popt, _ = curve_fit(model, w, y, p0=(1.0, spec.peak_omega, 0.5 * spec.gamma_fwhm))
    return float(np.max(np.abs(y - model(w, *popt)))), float(popt[1]), float(abs(popt[2]))
