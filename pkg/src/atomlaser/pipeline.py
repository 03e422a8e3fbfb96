"""One complete run: steady state, long-horizon amplitude, correlation, spectrum.

Also holds the artifact writers shared by the CLI subcommands. Everything
written here is a deterministic function of the configuration, so repeated
runs reproduce identical bytes.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import ComplexSeries, RunConfig, TimeGrid
from .kernel import KernelSamples, kernel_support, write_kernel_csv
from .laser import (
    EVAL_SUPPORTS,
    SteadyState,
    correlation,
    envelope_kernels,
    number_evolution,
    self_consistent_solve,
    solve_envelope,
)
from .spectrum import (
    BmaBaseline,
    ExpFit,
    SpectrumError,
    SpectrumResult,
    bma_baseline,
    linewidth_expfit,
    lorentzian_residual,
    output_flux_spectrum,
)
from .volterra import Checkpointer

log = logging.getLogger(__name__)

PROBE_START_S = 0.5
PROBE_LIMIT_S = 64.0
DECAY_LENGTHS = 10.0     # correlation horizon in units of 1/|nu|
WINDOW_WIDTHS = 25.0     # half-width of the omega window in units of the FWHM estimate
OMEGA_POINTS = 2001
NUMBER_HORIZON = 25.0    # number-evolution horizon in units of n_bar/r
MAX_CSV_ROWS = 20000


@dataclass(frozen=True, eq=False)
class RunResult:
    config: RunConfig
    steady: SteadyState
    kernels: KernelSamples
    envelope: ComplexSeries
    t_ref: float
    corr: ComplexSeries
    expfit: ExpFit
    spectrum: SpectrumResult | None
    bma: BmaBaseline
    lorentz: tuple | None
    n_of_t: np.ndarray
    summary: dict


def _probe_decay(P: float, config: RunConfig, kernels: KernelSamples) -> ExpFit:
    """Net decay of the envelope on a short solve, lengthened until it is measurable."""
    span = PROBE_START_S
    while True:
        grid = TimeGrid.covering(config.dt, span)
        env, _ = solve_envelope(P, config.params, grid, config.kernel_eps, kernels=kernels,
                                max_growth=math.inf)
        try:
            return linewidth_expfit(env, 0.0)
        except SpectrumError:
            if span >= PROBE_LIMIT_S:
                raise
            span *= 4


def choose_horizon(P: float, config: RunConfig, kernels: KernelSamples) -> float:
    """t_max such that the post-transient part spans DECAY_LENGTHS decay times."""
    if config.t_max is not None:
        return config.t_max
    fit = _probe_decay(P, config, kernels)
    tau_max = DECAY_LENGTHS / abs(fit.nu)
    return tau_max / (1 - config.transient_fraction)


def omega_window(omega0: float, fit: ExpFit, n_points: int = OMEGA_POINTS) -> np.ndarray:
    centre = omega0 + fit.omega_shift
    half = WINDOW_WIDTHS * fit.gamma
    return np.linspace(centre - half, centre + half, n_points)


def run(config: RunConfig, checkpoint_dir: Path | None = None,
        resume: bool = False) -> RunResult:
    params = config.params
    steady = self_consistent_solve(config)
    P = steady.P
    t_mem = kernel_support(config.kernel_eps, 0.0, params, config.dt,
                           config.t_max or PROBE_LIMIT_S)
    probe_kernels = envelope_kernels(params, config.dt, config.kernel_eps,
                                     t_mem * EVAL_SUPPORTS)
    t_max = choose_horizon(P, config, probe_kernels)
    grid = TimeGrid.covering(config.dt, t_max)
    kernels = envelope_kernels(params, config.dt, config.kernel_eps, grid.t_max)

    ckpt = None
    if checkpoint_dir is not None and config.checkpoint_every > 0:
        Path(checkpoint_dir).mkdir(parents=True, exist_ok=True)
        ckpt = Checkpointer(Path(checkpoint_dir) / f"envelope_r{params.r:g}.npz",
                            config.checkpoint_every, config.checkpoint_budget_s)
    envelope, _ = solve_envelope(P, params, grid, config.kernel_eps, kernels=kernels,
                                 max_growth=math.inf, checkpoint=ckpt, resume=resume)
    if ckpt is not None and ckpt.path.exists():
        ckpt.path.unlink()

    t_ref = config.transient_fraction * grid.t_max
    i_ref = int(round(t_ref / config.dt))
    t_ref = i_ref * config.dt
    corr = correlation(envelope, steady.n_bar, params.omega0, t_ref,
                       (grid.n_steps - 1 - i_ref) * config.dt)
    fit = linewidth_expfit(envelope, 0.0)

    omega = omega_window(params.omega0, fit)
    spec = None
    lorentz = None
    if config.linewidth_method in ("fft_fwhm", "both"):
        spec = output_flux_spectrum(corr, omega, params, carrier=omega[OMEGA_POINTS // 2])
        lorentz = lorentzian_residual(spec)
    bma = bma_baseline(params.r, steady.n_bar, params.n_s, omega, params.omega0)

    n_grid = TimeGrid.covering(config.dt, min(grid.t_max, NUMBER_HORIZON * steady.n_bar / params.r))
    n_env = ComplexSeries(n_grid, envelope.values[: n_grid.n_steps])
    n_of_t = number_evolution(P, params, n_grid, config.kernel_eps, envelope=n_env,
                              kernels=kernels)

    summary = _summary(config, steady, kernels, grid, t_ref, fit, spec, bma, lorentz, n_of_t)
    return RunResult(config, steady, kernels, envelope, t_ref, corr, fit, spec, bma,
                     lorentz, n_of_t, summary)


def _summary(config, steady, kernels, grid, t_ref, fit, spec, bma, lorentz, n_of_t) -> dict:
    params = config.params
    gamma_fwhm = spec.gamma_fwhm if spec is not None else None
    width = gamma_fwhm if gamma_fwhm is not None else fit.gamma
    if spec is not None:
        shift = spec.peak_omega - params.omega0
    else:
        shift = fit.omega_shift
    out = {
        "r_per_s": params.r,
        "P_per_s": steady.P,
        "n_bar": steady.n_bar,
        "iterations": steady.iterations,
        "converged": steady.converged,
        "threshold_ratio": steady.threshold_ratio,
        "near_threshold": steady.near_threshold,
        "gamma_fwhm_s": gamma_fwhm,
        "gamma_expfit_s": fit.gamma,
        # decay rate of the correlation (half width), the Table-1 convention
        "gamma_s": 0.5 * width,
        "gamma_bm_s": bma.Gamma_bm,
        "gamma_bm_damping_s": bma.gamma_bm,
        "ratio": 0.5 * width / bma.Gamma_bm,
        "peak_shift_rad_s": shift,
        "kbar_variation": spec.kbar_variation if spec is not None else None,
        "lorentzian_residual": lorentz[0] if lorentz is not None else None,
        "expfit_residual": fit.residual,
        "dt_s": config.dt,
        "t_max_s": grid.t_max,
        "t_ref_s": t_ref,
        "kernel_support_s": kernels.support_index * config.dt,
        "n_late": float(n_of_t[-1]),
        "linewidth_method": config.linewidth_method,
    }
    return out


# --- artifacts ---------------------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x))


def write_csv(path: Path, header: list[str], columns: list[np.ndarray]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*columns):
            w.writerow([_fmt(v) for v in row])


def _stride(n: int) -> int:
    return max(1, math.ceil(n / MAX_CSV_ROWS))


def write_json(path: Path, data: dict) -> None:
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_run(result: RunResult, out: Path) -> list[Path]:
    """Write the per-run artifacts into ``out``; returns the paths written."""
    from .plotting import plot_spectrum

    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    path = out / "summary.json"
    write_json(path, result.summary)
    written.append(path)

    env = result.envelope
    k = _stride(len(env))
    N = env.values[::k] * np.exp(-result.steady.P * env.times[::k])
    path = out / "N_series.csv"
    write_csv(path, ["t_s", "re_N", "im_N"], [env.times[::k], N.real, N.imag])
    written.append(path)

    c = result.corr
    k = _stride(len(c))
    path = out / "correlation.csv"
    write_csv(path, ["tau_s", "re_C", "im_C"],
              [c.times[::k], c.values[::k].real, c.values[::k].imag])
    written.append(path)

    n = result.n_of_t
    k = _stride(n.size)
    path = out / "n_series.csv"
    write_csv(path, ["t_s", "n"], [np.arange(n.size)[::k] * result.config.dt, n[::k]])
    written.append(path)

    path = out / "kernel.csv"
    write_kernel_csv(path, result.kernels)
    written.append(path)

    bma = result.bma
    if result.spectrum is not None:
        spec = result.spectrum
        path = out / "spectrum.csv"
        write_csv(path, ["omega_rad_s", "flux_normalized", "bma_lorentzian_normalized"],
                  [spec.omega, spec.flux, bma.lorentzian])
        written.append(path)
        path = out / "spectrum.png"
        plot_spectrum(path, spec, bma, result.config.params.omega0, result.config.params.r)
        written.append(path)
    return written
