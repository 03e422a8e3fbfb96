"""Airy functions Ai (and Bi, for validation) on |z| <= 40.

Three regions:

* |z| >= 10: asymptotic expansions, summed up to the smallest term. At
  zeta = (2/3)|z|^(3/2) >= 21 the truncation error is below 1e-17 relative.
* |z| < 10: Taylor series of the Airy equation y'' = z y about anchors spaced
  0.25 apart. The anchor at 0 uses the exact values Ai(0), Ai'(0), so the
  innermost cell |z| < 0.125 is the Maclaurin series itself.
* Anchor values are propagated outward by Taylor steps. Ai on the positive
  axis is stepped *down* from the asymptotic value at z = 10 (the recessive
  solution is stable in that direction); everything else is stepped away
  from z = 0.

Domain: |z| <= 40. Outside it ``airy_ai`` raises ValueError.
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

Z_MAX = 40.0
ASYMPTOTIC_FROM = 10.0
_H = 0.25
_N_ANCHOR = int(round(ASYMPTOTIC_FROM / _H))
_TAYLOR_TERMS = 30

AI0 = 3 ** (-2 / 3) / math.gamma(2 / 3)
AIP0 = -(3 ** (-1 / 3)) / math.gamma(1 / 3)
BI0 = 3 ** (-1 / 6) / math.gamma(2 / 3)
BIP0 = 3 ** (1 / 6) / math.gamma(1 / 3)


def _asymptotic_coeffs(n: int = 60):
    u = [1.0]
    for k in range(1, n):
        u.append(u[-1] * (6 * k - 5) * (6 * k - 3) * (6 * k - 1) / ((2 * k - 1) * 216 * k))
    v = [1.0] + [-(6 * k + 1) / (6 * k - 1) * u[k] for k in range(1, n)]
    return np.array(u), np.array(v)


_U, _V = _asymptotic_coeffs()


def _series(coeffs, zeta, sign):
    """sum_k sign^k c_k zeta^-k, truncated before the terms start growing."""
    total = np.zeros_like(zeta)
    term_prev = np.full_like(zeta, np.inf)
    active = np.ones(zeta.shape, dtype=bool)
    for k, c in enumerate(coeffs):
        term = (sign**k) * c * zeta ** (-k)
        active &= np.abs(term) < np.abs(term_prev)
        total = total + np.where(active, term, 0.0)
        term_prev = term
    return total


def _split_series(coeffs, zeta):
    """Even and odd parts sum (-1)^k c_2k zeta^-2k and sum (-1)^k c_2k+1 zeta^-(2k+1)."""
    even = coeffs[0::2] * (-1.0) ** np.arange(coeffs[0::2].size)
    odd = coeffs[1::2] * (-1.0) ** np.arange(coeffs[1::2].size)
    se = np.zeros_like(zeta)
    so = np.zeros_like(zeta)
    prev = np.full_like(zeta, np.inf)
    active = np.ones(zeta.shape, dtype=bool)
    for k in range(odd.size):
        te = even[k] * zeta ** (-2 * k)
        to = odd[k] * zeta ** (-(2 * k + 1))
        mag = np.abs(te) + np.abs(to)
        active &= mag < prev
        se = se + np.where(active, te, 0.0)
        so = so + np.where(active, to, 0.0)
        prev = mag
    return se, so


def _asymptotic(z, which):
    """Value and derivative from the large-|z| expansions (|z| >= 10)."""
    z = np.asarray(z, dtype=float)
    x = np.abs(z)
    zeta = 2.0 / 3.0 * x**1.5
    q = x**0.25
    val = np.empty_like(z)
    der = np.empty_like(z)
    pos = z > 0
    sqpi = math.sqrt(math.pi)
    if np.any(pos):
        zp, qp = zeta[pos], q[pos]
        if which == "ai":
            e = np.exp(-zp)
            val[pos] = e / (2 * sqpi * qp) * _series(_U, zp, -1.0)
            der[pos] = -qp * e / (2 * sqpi) * _series(_V, zp, -1.0)
        else:
            e = np.exp(zp)
            val[pos] = e / (sqpi * qp) * _series(_U, zp, 1.0)
            der[pos] = qp * e / sqpi * _series(_V, zp, 1.0)
    neg = ~pos
    if np.any(neg):
        zn, qn = zeta[neg], q[neg]
        ue, uo = _split_series(_U, zn)
        ve, vo = _split_series(_V, zn)
        c, s = np.cos(zn - math.pi / 4), np.sin(zn - math.pi / 4)
        if which == "ai":
            val[neg] = (c * ue + s * uo) / (sqpi * qn)
            der[neg] = qn / sqpi * (s * ve - c * vo)
        else:
            val[neg] = (-s * ue + c * uo) / (sqpi * qn)
            der[neg] = qn / sqpi * (c * ve + s * vo)
    return val, der


def _taylor(z0, y0, yp0, w, nterms=_TAYLOR_TERMS):
    """Solution of y'' = z y with y(z0) = y0, y'(z0) = yp0, evaluated at z0 + w.

    Coefficients follow (n+2)(n+1) a_{n+2} = z0 a_n + a_{n-1}.
    """
    a_nm1, a_n, a_np1 = y0, yp0, z0 * y0 / 2.0
    val = y0 + yp0 * w + a_np1 * w**2
    der = yp0 + 2 * a_np1 * w
    wpow = w**2
    for n in range(1, nterms):
        a_np2 = (z0 * a_n + a_nm1) / ((n + 2) * (n + 1))
        der = der + (n + 2) * a_np2 * wpow
        wpow = wpow * w
        val = val + a_np2 * wpow
        a_nm1, a_n, a_np1 = a_n, a_np1, a_np2
    return val, der


@lru_cache(maxsize=None)
def _anchors(which: str):
    """(y, y') at z_k = k*H for k = -N..N."""
    n = _N_ANCHOR
    y = np.zeros(2 * n + 1)
    yp = np.zeros(2 * n + 1)
    if which == "ai":
        y[n], yp[n] = AI0, AIP0
    else:
        y[n], yp[n] = BI0, BIP0
    for k in range(1, n + 1):  # negative axis, outward from 0
        z0 = -(k - 1) * _H
        y[n - k], yp[n - k] = _taylor(z0, y[n - k + 1], yp[n - k + 1], -_H)
    if which == "ai":
        top_v, top_d = _asymptotic(np.array([ASYMPTOTIC_FROM]), "ai")
        y[2 * n], yp[2 * n] = top_v[0], top_d[0]
        for k in range(n - 1, 0, -1):  # positive axis, inward from z = 10
            z0 = (k + 1) * _H
            y[n + k], yp[n + k] = _taylor(z0, y[n + k + 1], yp[n + k + 1], -_H)
    else:
        for k in range(1, n + 1):
            z0 = (k - 1) * _H
            y[n + k], yp[n + k] = _taylor(z0, y[n + k - 1], yp[n + k - 1], _H)
    return y, yp


def _airy(z, which):
    z = np.asarray(z, dtype=float)
    if np.any(~np.isfinite(z)) or np.any(np.abs(z) > Z_MAX):
        raise ValueError(f"Airy evaluation is restricted to |z| <= {Z_MAX:g}")
    val = np.empty_like(z)
    der = np.empty_like(z)
    far = np.abs(z) >= ASYMPTOTIC_FROM
    if np.any(far):
        val[far], der[far] = _asymptotic(z[far], which)
    near = ~far
    if np.any(near):
        zn = z[near]
        k = np.rint(zn / _H).astype(int)
        z0 = k * _H
        ya, ypa = _anchors(which)
        idx = k + _N_ANCHOR
        val[near], der[near] = _taylor(z0, ya[idx], ypa[idx], zn - z0)
    return val, der


def _unwrap(z, arr):
    return float(arr) if np.ndim(z) == 0 else arr


def airy_ai(z):
    """Ai(z) for real |z| <= 40."""
    return _unwrap(z, _airy(z, "ai")[0])


def airy_ai_prime(z):
    return _unwrap(z, _airy(z, "ai")[1])


def airy_bi(z):
    """Bi(z); only used to check the Wronskian of the Ai implementation."""
    return _unwrap(z, _airy(z, "bi")[0])


def airy_bi_prime(z):
    return _unwrap(z, _airy(z, "bi")[1])
