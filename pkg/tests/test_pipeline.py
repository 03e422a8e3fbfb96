import math

import numpy as np
import pytest

from atomlaser.pipeline import omega_window, write_run
from atomlaser.spectrum import linewidth_fwhm, lorentzian_residual, output_flux_spectrum

SUMMARY_KEYS = {"P_per_s", "n_bar", "iterations", "threshold_ratio", "gamma_fwhm_s",
                "gamma_expfit_s", "gamma_bm_s", "peak_shift_rad_s", "kbar_variation"}


def test_summary_fields(runs):
    s = runs(8e4).summary
    assert SUMMARY_KEYS <= set(s)
    assert s["converged"]
    assert s["n_late"] == pytest.approx(s["n_bar"], rel=0.05)
    assert s["gamma_s"] == pytest.approx(0.5 * s["gamma_fwhm_s"])
    assert s["ratio"] >= 50


def test_methods_agree(runs):
    for r in (2e4, 4e4, 8e4):
        s = runs(r).summary
        assert abs(s["gamma_fwhm_s"] / s["gamma_expfit_s"] - 1) < 0.05


def test_nearly_lorentzian_and_shifted(runs):
    res = runs(8e4)
    resid, centre, hwhm = lorentzian_residual(res.spectrum)
    assert resid < 0.05
    assert hwhm == pytest.approx(0.5 * res.spectrum.gamma_fwhm, rel=0.02)
    assert abs(res.summary["peak_shift_rad_s"]) > 10 * (res.spectrum.omega[1] - res.spectrum.omega[0])


def test_grid_refinement(runs):
    res = runs(4e4)
    params = res.config.params
    coarse = res.spectrum
    fine_omega = omega_window(params.omega0, res.expfit, 2 * coarse.omega.size - 1)
    fine = output_flux_spectrum(res.corr, fine_omega, params,
                                carrier=fine_omega[fine_omega.size // 2])
    assert abs(fine.gamma_fwhm / coarse.gamma_fwhm - 1) < 1e-2


def test_kbar_weighting_inert(runs):
    res = runs(8e4)
    params = res.config.params
    bare = output_flux_spectrum(res.corr, res.spectrum.omega, params, weighted=False,
                                carrier=res.spectrum.omega[res.spectrum.omega.size // 2])
    assert abs(bare.gamma_fwhm / res.spectrum.gamma_fwhm - 1) < 1e-2
    assert res.spectrum.kbar_variation < 1e-2


def test_flux_nonnegative_in_window(runs):
    spec = runs(2e4).spectrum
    window = np.abs(spec.omega - spec.peak_omega) <= 0.5 * spec.gamma_fwhm
    assert np.all(spec.flux[window] >= 0)
    assert spec.flux.max() == 1.0
    assert linewidth_fwhm(spec.omega, spec.flux) == spec.gamma_fwhm


def test_correlation_starts_at_nbar(runs):
    res = runs(2e4)
    assert res.corr.values[0] == res.steady.n_bar
    assert abs(res.corr.values[-1]) < 1e-3 * res.steady.n_bar


def test_written_artifacts(runs, tmp_path):
    paths = write_run(runs(2e4), tmp_path)
    names = sorted(p.name for p in paths)
    assert names == sorted(["summary.json", "N_series.csv", "correlation.csv", "n_series.csv",
                            "kernel.csv", "spectrum.csv", "spectrum.png"])
    header = (tmp_path / "spectrum.csv").read_text().splitlines()[0]
    assert header == "omega_rad_s,flux_normalized,bma_lorentzian_normalized"
    assert (tmp_path / "N_series.csv").read_text().startswith("t_s,re_N,im_N\n")
    assert (tmp_path / "correlation.csv").read_text().startswith("tau_s,re_C,im_C\n")
    assert (tmp_path / "n_series.csv").read_text().startswith("t_s,n\n")
    assert (tmp_path / "spectrum.png").read_bytes()[:4] == b"\x89PNG"
    rows = (tmp_path / "N_series.csv").read_text().splitlines()
    assert math.isclose(float(rows[1].split(",")[1]), 1.0)
