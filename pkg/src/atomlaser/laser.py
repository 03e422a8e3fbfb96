"""Pumped single-mode atom laser without the Born-Markov approximation.

The lasing-mode correlation is carried by J(t), solution of

    dJ/dt = (i omega0 + P) J - int_0^t conj(f(t-s)) J(s) ds.

Two equivalent frames are used:

* rotating frame N(t) = J(t) exp(-(i omega0 + P) t), the form with no
  instantaneous term (``solve_N``);
* envelope M(t) = J(t) exp(-i omega0 t) = N(t) exp(P t) (``solve_envelope``),
  whose modulus only drifts at the net decay rate. Long horizons use this
  one because |N| falls like exp(-P t) and underflows after a few tens of
  seconds.

Only ratios J(t)/J(s) enter observables, so the normalization J(0) = 1 is free.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    ComplexSeries,
    ConvergenceError,
    NumericalError,
    PhysicalParams,
    RunConfig,
    TimeGrid,
)
from .kernel import KernelSamples, kernel_support, memory_kernel_f, sample_kernels
from .volterra import Checkpointer, ConvolutionIDEProblem, solve_convolution, solve_two_time

log = logging.getLogger(__name__)

MAX_GROWTH = 1e3
EVAL_SUPPORTS = 10
NEAR_THRESHOLD = 10.0


@dataclass(frozen=True)
class SteadyState:
    P: float
    n_bar: float
    iterations: int
    converged: bool
    threshold_ratio: float
    history: tuple = field(default=(), compare=False)

    @property
    def near_threshold(self) -> bool:
        return self.threshold_ratio < NEAR_THRESHOLD


@dataclass(frozen=True, eq=False)
class LaserSolution:
    steady: SteadyState
    envelope: ComplexSeries
    kernels: KernelSamples
    t_ref: float
    correlation: ComplexSeries | None = None
    n_of_t: np.ndarray | None = None

    @property
    def N(self) -> ComplexSeries:
        """Rotating-frame amplitude; underflows to zero on very long horizons."""
        env = self.envelope
        return ComplexSeries(env.grid, env.values * np.exp(-self.steady.P * env.times))


def _kernel_series(values: np.ndarray, dt: float) -> ComplexSeries:
    return ComplexSeries(TimeGrid(dt, max(values.size, 2)),
                         values if values.size >= 2 else np.append(values, 0))


def solve_N(P: float, params: PhysicalParams, grid: TimeGrid, kernel_eps: float,
            max_growth: float = MAX_GROWTH) -> ComplexSeries:
    """Rotating-frame amplitude: dN/dt = -int_0^t H(t-s) N(s) ds, N(0) = 1."""
    if P < 0:
        raise ValueError("pump parameter P must be non-negative")
    ks = sample_kernels(params, P, grid.dt, kernel_eps, grid.t_max)
    problem = ConvolutionIDEProblem(_kernel_series(ks.H_values, grid.dt), grid)
    try:
        return solve_convolution(problem, max_abs=max_growth)
    except NumericalError as exc:
        if "exceeded" in str(exc):
            raise NumericalError(f"{exc}: P = {P:g} exceeds the total loss",
                                 exc.partial) from None
        raise


def envelope_kernels(params: PhysicalParams, dt: float, kernel_eps: float,
                     t_limit: float) -> KernelSamples:
    """f on the grid plus conj(f) exp(-i omega0 dt), the envelope-frame kernel."""
    return sample_kernels(params, 0.0, dt, kernel_eps, t_limit)


def solve_envelope(P: float, params: PhysicalParams, grid: TimeGrid, kernel_eps: float,
                   *, kernels: KernelSamples | None = None,
                   max_growth: float = MAX_GROWTH,
                   checkpoint: Checkpointer | None = None,
                   resume: bool = False) -> tuple[ComplexSeries, KernelSamples]:
    """M(t) = N(t) exp(P t): dM/dt = P M - int_0^t conj(f) exp(-i omega0 (t-s)) M(s) ds."""
    if P < 0:
        raise ValueError("pump parameter P must be non-negative")
    if kernels is None:
        kernels = envelope_kernels(params, grid.dt, kernel_eps, grid.t_max)
    problem = ConvolutionIDEProblem(_kernel_series(kernels.H_values, grid.dt), grid,
                                    linear_coefficient=P)
    try:
        sol = solve_convolution(problem, max_abs=max_growth, checkpoint=checkpoint,
                                resume=resume)
    except NumericalError as exc:
        if "exceeded" in str(exc):
            raise NumericalError(f"{exc}: P = {P:g} exceeds the total loss",
                                 exc.partial) from None
        raise
    return sol, kernels


def dissipation_integral(envelope: np.ndarray, eval_index: int, f_values: np.ndarray,
                         omega0: float, dt: float) -> float:
    """int Re(2 f(t-s) J(t)/J(s)) ds at t = eval_index*dt over the tabulated support."""
    m = min(f_values.size - 1, eval_index)
    lag = np.arange(m + 1) * dt
    ratio = envelope[eval_index] / envelope[eval_index - m:eval_index + 1][::-1]
    integrand = (2 * f_values[: m + 1] * np.exp(1j * omega0 * lag) * ratio).real
    return float(dt * (integrand[1:-1].sum() + 0.5 * (integrand[0] + integrand[-1])))


def steady_state_nbar(P: float, params: PhysicalParams, dt: float, kernel_eps: float,
                      n_supports: int = EVAL_SUPPORTS,
                      kernels: KernelSamples | None = None) -> float:
    """Fast steady state: r divided by the dissipation integral at a late time.

    The amplitude is solved up to ``n_supports`` kernel supports, so the
    memory integral sees only post-transient history.
    """
    if n_supports < 5:
        raise ValueError("evaluate at least five kernel supports after the start")
    if kernels is None:
        t_mem = kernel_support(kernel_eps, 0.0, params, dt, 1.0)
        kernels = envelope_kernels(params, dt, kernel_eps, t_mem * n_supports)
    eval_index = n_supports * kernels.support_index
    grid = TimeGrid(dt, eval_index + 1)
    env, _ = solve_envelope(P, params, grid, kernel_eps, kernels=kernels,
                            max_growth=math.inf)
    den = dissipation_integral(env.values, eval_index, kernels.f_values, params.omega0, dt)
    if not den > 0:
        raise NumericalError(f"no dissipative steady state at this P (P = {P:g})")
    return params.r / den


def number_evolution(P: float, params: PhysicalParams, grid: TimeGrid, kernel_eps: float,
                     envelope: ComplexSeries | None = None,
                     kernels: KernelSamples | None = None) -> np.ndarray:
    """Intracavity number n(t) from n(0) = 0 with the J-ratio memory kernel."""
    if kernels is None:
        kernels = envelope_kernels(params, grid.dt, kernel_eps, grid.t_max)
    if envelope is None:
        envelope, _ = solve_envelope(P, params, grid, kernel_eps, kernels=kernels,
                                     max_growth=math.inf)
    if envelope.grid != grid:
        raise ValueError("envelope must be sampled on the number-evolution grid")
    dt = grid.dt
    m = kernels.support_index
    # 2 f(lag) exp(i omega0 lag), indexed by lag
    weight = 2 * kernels.f_values * np.exp(1j * params.omega0 * kernels.times)
    amp = envelope.values

    def kernel_eval(t, s):
        i = int(round(t / dt))
        j = np.rint(s / dt).astype(int)
        return (weight[i - j] * (amp[i] / amp[j])).real

    sol = solve_two_time(kernel_eval, params.r, 0.0, grid, m * dt)
    n = sol.values.real.copy()
    if np.any(n < -1e-9 * max(1.0, np.abs(n).max())):
        raise NumericalError("intracavity number went negative")
    return n


def _markov_guess(params: PhysicalParams, kernels: KernelSamples) -> float:
    """Initial pump parameter from the memoryless loss rate Re int conj(f) e^{-i w0 t} dt."""
    h = kernels.H_values.real
    loss = kernels.grid.dt * (h[1:-1].sum() + 0.5 * (h[0] + h[-1]))
    n_bar = params.r / (2 * loss)
    return params.r / (2 * (n_bar + params.n_s) + 1)


def pump_parameter(r: float, n_bar: float, n_s: float) -> float:
    return r / (2 * (n_bar + n_s) + 1)


def self_consistent_solve(config: RunConfig) -> SteadyState:
    """Fixed point P -> n_bar(P) -> r/(2(n_bar + n_s) + 1).

    Starts from the memoryless estimate of the loss, which keeps P below the
    total loss from the first iterate. If the iterates start to oscillate
    without shrinking, the update is replaced by the mean of the last two.
    """
    params = config.params
    t_mem = kernel_support(config.kernel_eps, 0.0, params, config.dt,
                           config.t_max or 1.0)
    kernels = envelope_kernels(params, config.dt, config.kernel_eps, t_mem * EVAL_SUPPORTS)
    P = _markov_guess(params, kernels)
    history = []
    prev_nbar = None
    prev_step = None
    damped = False
    for it in range(1, config.max_iters + 1):
        n_bar = steady_state_nbar(P, params, config.dt, config.kernel_eps, kernels=kernels)
        history.append((P, n_bar))
        if prev_nbar is not None and abs(n_bar - prev_nbar) < config.selfcons_tol * n_bar:
            state = SteadyState(P, n_bar, it, True, n_bar / params.n_s if params.n_s else math.inf,
                                tuple(history))
            if state.near_threshold:
                log.warning("n_bar/n_s = %.2f: close to threshold, pump linearization is "
                            "questionable", state.threshold_ratio)
            return state
        new_P = pump_parameter(params.r, n_bar, params.n_s)
        step = new_P - P
        if prev_step is not None and step * prev_step < 0 and abs(step) >= abs(prev_step):
            if damped:
                raise ConvergenceError(
                    f"pump iteration oscillates even with damping (P = {P:g}, n_bar = {n_bar:g})"
                )
            damped = True
            new_P = 0.5 * (P + new_P)
            step = new_P - P
        prev_nbar, prev_step, P = n_bar, step, new_P
    raise ConvergenceError(
        f"pump self-consistency not reached in {config.max_iters} iterations "
        f"(last P = {P:g}, n_bar = {prev_nbar:g})"
    )


def correlation(envelope: ComplexSeries, n_bar: float, omega0: float, t_ref: float,
                tau_max: float) -> ComplexSeries:
    """C(tau) = <a^dag(t_ref + tau) a(t_ref)> = n_bar J(t_ref + tau)/J(t_ref)."""
    dt = envelope.grid.dt
    i0 = int(round(t_ref / dt))
    n_tau = int(round(tau_max / dt)) + 1
    if i0 < 0 or i0 + n_tau > envelope.grid.n_steps:
        raise ValueError(
            f"t_ref + tau_max = {t_ref + tau_max:g} s runs past the solved horizon "
            f"{envelope.grid.t_max:g} s"
        )
    grid = TimeGrid(dt, n_tau)
    ratio = envelope.values[i0:i0 + n_tau] / envelope.values[i0]
    values = n_bar * np.exp(1j * omega0 * grid.times) * ratio
    values[0] = n_bar
    return ComplexSeries(grid, values)
