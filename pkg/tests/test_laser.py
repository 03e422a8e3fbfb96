import logging
import math

import numpy as np
import pytest

from atomlaser.core import ConvergenceError, NumericalError, RunConfig, TimeGrid, paper_params
from atomlaser.kernel import KernelSamples
from atomlaser.laser import (
    correlation,
    envelope_kernels,
    number_evolution,
    pump_parameter,
    self_consistent_solve,
    solve_envelope,
    solve_N,
    steady_state_nbar,
)

DT = 2.5e-5


@pytest.fixture(scope="module")
def steady():
    return self_consistent_solve(RunConfig(paper_params(2e4), DT))


def test_self_consistent_reference_row(steady):
    assert steady.converged
    assert steady.n_bar == pytest.approx(450, rel=0.10)
    assert steady.n_bar == pytest.approx(433.664, rel=1e-4)
    assert steady.P == pytest.approx(2e4 / (2 * (450 + 47) + 1), rel=0.10)
    assert steady.threshold_ratio == pytest.approx(steady.n_bar / 47)
    assert steady.near_threshold


def test_fixed_point_consistency(steady):
    assert steady.P == pytest.approx(pump_parameter(2e4, steady.n_bar, 47), rel=1e-5)
    again = steady_state_nbar(steady.P, paper_params(2e4), DT, 1e-6)
    assert again == pytest.approx(steady.n_bar, rel=1e-5)


def test_near_threshold_warning(caplog):
    with caplog.at_level(logging.WARNING, logger="atomlaser.laser"):
        self_consistent_solve(RunConfig(paper_params(2e4), DT))
    assert "close to threshold" in caplog.text


def test_threshold_ratio_rises_with_r(steady):
    higher = self_consistent_solve(RunConfig(paper_params(8e4), DT))
    assert higher.n_bar == pytest.approx(1800, rel=0.10)
    assert higher.threshold_ratio > steady.threshold_ratio
    assert not higher.near_threshold


def test_nbar_linear_in_r(steady):
    a = steady_state_nbar(steady.P, paper_params(2e4), DT, 1e-6)
    b = steady_state_nbar(steady.P, paper_params(4e4), DT, 1e-6)
    assert b == pytest.approx(2 * a, rel=1e-13)


def test_steady_needs_post_transient_evaluation():
    with pytest.raises(ValueError):
        steady_state_nbar(20.0, paper_params(), DT, 1e-6, n_supports=2)


def test_no_dissipative_state_reported(monkeypatch):
    monkeypatch.setattr("atomlaser.laser.dissipation_integral", lambda *a: -1.0)
    with pytest.raises(NumericalError, match="no dissipative steady state"):
        steady_state_nbar(200.0, paper_params(), DT, 1e-6)


def test_max_iters_exhausted():
    with pytest.raises(ConvergenceError, match="not reached in 1 iterations"):
        self_consistent_solve(RunConfig(paper_params(2e4), DT, max_iters=1))


def test_N_decays_monotonically_after_transient(steady):
    params = paper_params(2e4)
    grid = TimeGrid.covering(DT, 1.0)
    N = solve_N(steady.P, params, grid, 1e-6)
    assert N.values[0] == 1.0
    tail = np.abs(N.values[int(0.03 / DT):])
    assert np.all(np.diff(tail) < 0)


def test_N_dt_halving(steady):
    params = paper_params(2e4)
    a = solve_N(steady.P, params, TimeGrid.covering(DT, 1.0), 1e-6).values[-1]
    b = solve_N(steady.P, params, TimeGrid.covering(DT / 2, 1.0), 1e-6).values[-1]
    assert abs(a - b) / abs(b) < 1e-2


def test_envelope_equals_scaled_N(steady):
    params = paper_params(2e4)
    grid = TimeGrid.covering(DT, 0.5)
    N = solve_N(steady.P, params, grid, 1e-6)
    M, _ = solve_envelope(steady.P, params, grid, 1e-6)
    # the two frames discretize the instantaneous term differently; both are O(dt^2)
    np.testing.assert_allclose(M.values * np.exp(-steady.P * grid.times), N.values, rtol=1e-5)


def test_pump_beyond_loss_is_unstable():
    # the envelope grows like exp((P - loss) t) once P exceeds the loss (about 23 /s)
    with pytest.raises(NumericalError, match="exceeds the total loss"):
        solve_envelope(200.0, paper_params(), TimeGrid.covering(DT, 1.0), 1e-6)
    with pytest.raises(ValueError):
        solve_N(-1.0, paper_params(), TimeGrid.covering(DT, 0.01), 1e-6)


def test_number_evolution_without_memory_is_linear():
    params = paper_params(2e4)
    grid = TimeGrid.covering(1e-4, 0.1)
    zero = np.zeros(11, dtype=complex)
    ks = KernelSamples(TimeGrid(1e-4, 11), zero, zero, 10, 0.0)
    n = number_evolution(0.0, params, grid, 1e-6, kernels=ks)
    np.testing.assert_allclose(n, 2e4 * grid.times, rtol=1e-12, atol=1e-9)


def test_number_evolution_approaches_steady_state(steady):
    params = paper_params(2e4)
    grid = TimeGrid.covering(DT, 0.5)
    n = number_evolution(steady.P, params, grid, 1e-6)
    assert np.all(n >= 0)
    assert n[-1] == pytest.approx(steady.n_bar, rel=0.05)


def test_correlation_properties(steady):
    params = paper_params(2e4)
    grid = TimeGrid.covering(DT, 2.0)
    env, ks = solve_envelope(steady.P, params, grid, 1e-6)
    c = correlation(env, steady.n_bar, params.omega0, 0.2, 1.5)
    assert c.values[0] == steady.n_bar
    mag = np.abs(c.values[ks.support_index:])
    assert np.all(np.diff(mag) <= 0)
    shifted = correlation(env, steady.n_bar, params.omega0, 0.2 + ks.support_index * DT, 1.5)
    assert np.max(np.abs(shifted.values - c.values) / np.abs(c.values)) < 1e-2
    with pytest.raises(ValueError, match="past the solved horizon"):
        correlation(env, steady.n_bar, params.omega0, 1.0, 1.5)


def test_envelope_kernels_support(steady):
    ks = envelope_kernels(paper_params(), DT, 1e-6, 1.0)
    assert 5e-3 <= ks.support_index * DT <= 30e-3
    assert math.isclose(ks.f_values[0].real, 2e4)
