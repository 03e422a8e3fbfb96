"""Static PNG figures for run outputs.

Uses the Agg backend and strips the software/date metadata so identical
data give identical files. Matplotlib is not thread-safe, so rendering is
serialized with a module lock when runs execute in worker threads.
"""
from __future__ import annotations

import threading
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .spectrum import lorentzian  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 10,
    "legend.fontsize": 8,
    "lines.linewidth": 1.2,
    "figure.dpi": 100,
    "savefig.dpi": 150,
}
LINESTYLES = (":", "--", "-")
_METADATA = {"Software": None}
_LOCK = threading.Lock()


def _save(fig, path: Path) -> None:
    fig.savefig(path, metadata=_METADATA)
    plt.close(fig)


def plot_spectrum(path: Path, spec, bma, omega0: float, r: float) -> None:
    """Simulated flux spectrum against the Born-Markov Lorentzian."""
    with _LOCK, plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5.0, 3.4))
        ax.plot(spec.omega - omega0, spec.flux, "-", color="k", label="memory kernel")
        # the reference line is far narrower than the grid; draw it on its own samples
        w_bma = np.union1d(bma.omega, omega0 + bma.Gamma_bm * np.linspace(-10, 10, 401))
        ax.plot(w_bma - omega0, lorentzian(w_bma, omega0, bma.Gamma_bm), "--", color="tab:red",
                label=r"Born-Markov ($\Gamma_{BM}$ = %.2g s$^{-1}$)" % bma.Gamma_bm)
        ax.axvline(spec.peak_omega - omega0, color="0.6", lw=0.8)
        ax.set_xlabel(r"$\omega - \omega_0$ (rad s$^{-1}$)")
        ax.set_ylabel("flux (peak normalized)")
        ax.set_title(f"r = {r:.3g} s$^{{-1}}$, FWHM = {spec.gamma_fwhm:.3g} s$^{{-1}}$")
        shift = spec.peak_omega - omega0
        lo = min(0.0, shift - 8 * spec.gamma_fwhm)
        hi = max(0.0, shift + 8 * spec.gamma_fwhm)
        ax.set_xlim(lo - 0.05 * (hi - lo), hi + 0.05 * (hi - lo))
        ax.set_ylim(0, 1.08)
        ax.legend(frameon=False, loc="upper right")
        fig.tight_layout()
        _save(fig, path)


def plot_figure(path: Path, omega: np.ndarray, fluxes: dict, omega0: float,
                span: float | None = None) -> None:
    """Peak-normalized spectra for several pump rates on a shared frequency axis.

    ``span`` limits the axis to that many rad/s either side of the tallest peak.
    """
    with _LOCK, plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5.0, 3.4))
        for style, (r, flux) in zip(LINESTYLES, sorted(fluxes.items())):
            ax.plot(omega - omega0, flux, style, color="k",
                    label=f"r = {r / 1e3:g}" + r"$\times10^3$ s$^{-1}$")
        ax.set_xlabel(r"$\omega - \omega_0$ (rad s$^{-1}$)")
        ax.set_ylabel("output flux (peak normalized)")
        if span is not None:
            centre = omega[np.argmax(next(iter(fluxes.values())))] - omega0
            ax.set_xlim(centre - span, centre + span)
        ax.set_ylim(0, 1.08)
        ax.legend(frameon=False)
        fig.tight_layout()
        _save(fig, path)
