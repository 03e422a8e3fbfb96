"""Output-coupling kernels: coupling profile, gravity propagator, memory function.

The closed forms are what the solvers use. ``memory_kernel_quadrature`` and
``propagate_gaussian`` integrate the defining expressions numerically and are
kept for validation only.
"""
from __future__ import annotations

import cmath
import csv
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import IntegrationWarning, quad

from .core import NumericalError, PhysicalParams, TimeGrid, derive_constants


def coupling_kappa(x, params: PhysicalParams):
    """Gaussian coupling profile; normalized so that the integral of kappa^2 is gamma."""
    amp = math.sqrt(params.gamma) * (2 * params.sigma_k**2 / math.pi) ** 0.25
    return amp * np.exp(-((params.sigma_k * np.asarray(x, dtype=float)) ** 2))


def greens_function(x, y, dt, params: PhysicalParams):
    """Free-fall propagator G(x, t, y, s) for the potential m g x, with dt = t - s > 0."""
    if np.any(np.asarray(dt) <= 0):
        raise ValueError("propagator is only defined pointwise for dt > 0")
    lam = derive_constants(params).lam
    g = params.g
    x, y, dt = np.asarray(x, float), np.asarray(y, float), np.asarray(dt, float)
    phase = (
        (x - y) ** 2 / (4 * lam * dt)
        - g * dt * (x + y) / (4 * lam)
        - g**2 * dt**3 / (48 * lam)
    )
    return np.sqrt(1 / (4j * math.pi * lam * dt)) * np.exp(1j * phase)


def memory_kernel_f(dt, params: PhysicalParams):
    """Closed-form memory function f(dt) for Gaussian coupling under gravity."""
    dt = np.asarray(dt, dtype=float)
    if np.any(dt < 0):
        raise ValueError("memory function needs dt >= 0")
    lam = derive_constants(params).lam
    g, sk = params.g, params.sigma_k
    gauss = np.exp(-(g**2) * dt**2 / (32 * lam**2 * sk**2))
    chirp = np.exp(-1j * g**2 * dt**3 / (48 * lam))
    return params.gamma * gauss * chirp / np.sqrt(1 + 2j * lam * dt * sk**2)


def rotated_kernel_H(dt, P: float, params: PhysicalParams):
    """conj(f(dt)) exp(-(i omega0 + P) dt), the kernel of the rotating-frame amplitude."""
    dt = np.asarray(dt, dtype=float)
    return np.conj(memory_kernel_f(dt, params)) * np.exp(-(1j * params.omega0 + P) * dt)


def kernel_support(eps: float, P: float, params: PhysicalParams, dt: float,
                   t_max: float) -> float:
    """Smallest grid time past which |H| stays below eps*gamma.

    "Stays below" is checked over the following decade, i.e. up to ten times
    the returned time (or up to ``t_max`` if that comes first).
    """
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    n_lim = int(math.floor(t_max / dt + 1e-9))
    threshold = eps * params.gamma
    n_probe = 1024
    while True:
        n_eval = min(10 * n_probe, n_lim)
        t = np.arange(n_eval + 1) * dt
        above = np.flatnonzero(np.abs(rotated_kernel_H(t, P, params)) >= threshold)
        cand = np.arange(1, min(n_probe, n_lim) + 1)
        # next index at or after each candidate that is still above threshold
        pos = np.searchsorted(above, cand)
        nxt = np.where(pos < above.size, above[np.minimum(pos, above.size - 1)], n_lim + 1)
        ok = (nxt > np.minimum(10 * cand, n_eval)) & ((10 * cand <= n_eval) | (n_eval == n_lim))
        if np.any(ok):
            return float(cand[np.argmax(ok)] * dt)
        if n_probe >= n_lim:
            raise NumericalError(
                f"kernel support exceeds t_max = {t_max:g} s at eps = {eps:g}; "
                "use a larger t_max or a larger kernel_eps"
            )
        n_probe *= 4


@dataclass(frozen=True, eq=False)
class KernelSamples:
    grid: TimeGrid
    f_values: np.ndarray
    H_values: np.ndarray
    support_index: int
    P: float

    @property
    def times(self):
        return self.grid.times


def sample_kernels(params: PhysicalParams, P: float, dt: float, eps: float,
                   t_max: float) -> KernelSamples:
    """Tabulate f and H on the solver grid, truncated at the kernel support."""
    t_mem = kernel_support(eps, P, params, dt, t_max)
    n = int(round(t_mem / dt))
    grid = TimeGrid(dt, n + 1)
    t = grid.times
    f = memory_kernel_f(t, params)
    H = np.conj(f) * np.exp(-(1j * params.omega0 + P) * t)
    f.setflags(write=False)
    H.setflags(write=False)
    return KernelSamples(grid, f, H, n, P)


def write_kernel_csv(path, samples: KernelSamples) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["dt_s", "re_f", "im_f", "re_H", "im_H"])
        for t, f, h in zip(samples.times, samples.f_values, samples.H_values):
            w.writerow([repr(float(t)), repr(f.real), repr(f.imag), repr(h.real), repr(h.imag)])


# --- numerical oracles -------------------------------------------------------

def memory_kernel_quadrature(dt: float, params: PhysicalParams, bound: float = 6.0,
                             epsrel: float = 1e-9) -> complex:
    """f(dt) as the double integral of kappa(x) kappa(y) G(x, dt, y, 0).

    Integrates over the square |x|, |y| <= bound/sigma_k, written in the
    rotated coordinates u = x - y, v = x + y so that the inner integral is
    smooth and the propagator chirp only appears in the outer one.
    """
    if dt <= 0:
        raise ValueError("quadrature oracle needs dt > 0")
    lam = derive_constants(params).lam
    g, sk = params.g, params.sigma_k
    amp = params.gamma * math.sqrt(2 * sk**2 / math.pi)
    pref = cmath.sqrt(1 / (4j * math.pi * lam * dt))
    tail = g**2 * dt**3 / (48 * lam)
    B = bound / sk

    def integrand(u, v):
        x, y = (v + u) / 2, (v - u) / 2
        weight = amp * math.exp(-(sk * sk) * (x * x + y * y))
        phase = u * u / (4 * lam * dt) - g * dt * v / (4 * lam) - tail
        return weight * pref * cmath.exp(1j * phase)

    def part(take):
        def inner(u):
            w = 2 * B - abs(u)
            return quad(lambda v: take(integrand(u, v)), -w, w,
                        epsabs=0, epsrel=epsrel, limit=200)[0]
        return 0.5 * quad(inner, -2 * B, 2 * B, epsabs=0, epsrel=epsrel,
                          limit=4000, points=[0.0])[0]

    with warnings.catch_warnings():
        # quad flags roundoff near the requested tolerance; the achieved error is far smaller
        warnings.simplefilter("ignore", IntegrationWarning)
        return complex(part(lambda z: z.real), part(lambda z: z.imag))


def propagate_gaussian(x: float, dt: float, width: float, params: PhysicalParams) -> complex:
    """Integral of G(x, dt, y, 0) exp(-y^2/width^2) over y.

    The chirp exp(i (x-y)^2 / (4 lam dt)) is removed by rotating the
    integration path to y = x + exp(i pi/4) s, which is allowed because the
    integrand is entire and decays in the swept sector. What remains is a
    smooth Gaussian-damped integral.
    """
    lam = derive_constants(params).lam
    g = params.g
    a = 4 * lam * dt
    rot = cmath.exp(1j * math.pi / 4)
    pref = cmath.sqrt(1 / (1j * math.pi * a))

    def integrand(s):
        y = x + rot * s
        expo = (-s * s / a - 1j * g * dt * (x + y) / (4 * lam)
                - 1j * g**2 * dt**3 / (48 * lam) - y * y / width**2)
        return pref * cmath.exp(expo) * rot

    half = 12 * math.sqrt(a)
    re = quad(lambda s: integrand(s).real, -half, half, epsabs=0, epsrel=1e-12, limit=200)[0]
    im = quad(lambda s: integrand(s).imag, -half, half, epsabs=0, epsrel=1e-12, limit=200)[0]
    return complex(re, im)
