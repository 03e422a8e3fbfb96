"""Direct time stepping for linear Volterra integro-differential equations.

Solves

    dy/dt = c y + source - int_0^t K(t, s) y(s) ds

on a uniform grid. The memory integral uses the trapezoidal rule over the
truncated window [t - support, t]; the time step is a Heun predictor-corrector
(explicit Euler predictor, trapezoidal corrector). Both pieces are second
order, and the scheme is self-starting.

Sums run in a fixed sequential order inside numba loops, so a given problem
always reproduces the same bits.
"""
from __future__ import annotations

import hashlib
import logging
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numba
import numpy as np

from .core import ComplexSeries, NumericalError, TimeGrid

log = logging.getLogger(__name__)


class CheckpointError(RuntimeError):
    """A snapshot cannot be used to resume this solve."""


class SolveInterrupted(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class ConvolutionIDEProblem:
    kernel: ComplexSeries
    grid: TimeGrid
    linear_coefficient: complex = 0.0
    source: float = 0.0
    initial_value: complex = 1.0

    def __post_init__(self):
        if not math.isclose(self.kernel.grid.dt, self.grid.dt, rel_tol=1e-12):
            raise ValueError("kernel and solution grids must share dt")

    @property
    def support_index(self) -> int:
        return len(self.kernel) - 1

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.kernel.values, dtype=np.complex128).tobytes())
        h.update(repr((self.grid.dt, self.grid.n_steps, complex(self.linear_coefficient),
                       float(self.source), complex(self.initial_value))).encode())
        return h.hexdigest()


@numba.njit(cache=True, nogil=True)
def _step(row, c, src, y, d, n, j0, dt):
    """Advance y[n] -> y[n+1]; row[k] holds K(t_{n+1}, t_{j0+k}). Returns dy/dt at n+1."""
    width = n + 1 - j0
    yp = y[n] + dt * d
    if width == 0:
        dp = c * yp + src
        ynew = y[n] + 0.5 * dt * (d + dp)
        y[n + 1] = ynew
        return c * ynew + src
    s = 0j
    for k in range(1, width):
        s += row[k] * y[j0 + k]
    s += 0.5 * row[0] * y[j0]
    k0 = row[width]
    integral = dt * (s + 0.5 * k0 * yp)
    dp = c * yp + src - integral
    ynew = y[n] + 0.5 * dt * (d + dp)
    y[n + 1] = ynew
    return c * ynew + src - (integral + dt * 0.5 * k0 * (ynew - yp))


@numba.njit(cache=True, nogil=True)
def _advance(K, c, src, y, state, n0, n1, dt, limit):
    """Steps n0 -> n1 of the convolution problem. Returns -1 or the failing index."""
    m = K.shape[0] - 1
    d = state[0]
    for n in range(n0, n1):
        j0 = n + 1 - m
        if j0 < 0:
            j0 = 0
        row = K[n + 1 - j0::-1]
        d = _step(row, c, src, y, d, n, j0, dt)
        v = y[n + 1]
        if not (np.isfinite(v.real) and np.isfinite(v.imag)) or abs(v) > limit:
            state[0] = d
            return n + 1
    state[0] = d
    return -1


def _fail(index: int, y: np.ndarray, dt: float, limit: float):
    v = y[index]
    partial = (np.arange(index + 1) * dt, y[: index + 1].copy())
    if np.isfinite(v) and abs(v) > limit:
        raise NumericalError(
            f"|y| exceeded {limit:g} at step {index} (t = {index * dt:g} s); "
            "the solution is growing", partial
        )
    raise NumericalError(
        f"non-finite value at step {index} (t = {index * dt:g} s); try a smaller dt", partial
    )


class Checkpointer:
    """Periodic snapshots of a running solve.

    ``every`` is the snapshot cadence in steps (0 disables). With a positive
    ``budget_s`` snapshots are only written if the projected solve time,
    measured on the first chunk, exceeds the budget.
    """

    def __init__(self, path, every: int, budget_s: float = 0.0,
                 on_snapshot: Callable[[int], None] | None = None):
        self.path = Path(path)
        self.every = int(every)
        self.budget_s = float(budget_s)
        self.on_snapshot = on_snapshot

    @property
    def enabled(self) -> bool:
        return self.every > 0

    def save(self, digest: str, y: np.ndarray, n: int, d: complex) -> None:
        hist = np.ascontiguousarray(y[: n + 1])
        tmp = self.path.with_name(self.path.name + ".tmp")
        with open(tmp, "wb") as fh:
            np.savez(fh, digest=np.array(digest), n=np.array(n), d=np.array(d),
                     y=hist, y_sha=np.array(hashlib.sha256(hist.tobytes()).hexdigest()))
        tmp.replace(self.path)
        if self.on_snapshot is not None:
            self.on_snapshot(n)

    def load(self, digest: str) -> tuple[np.ndarray, int, complex]:
        try:
            with np.load(self.path, allow_pickle=False) as z:
                saved, n, d = str(z["digest"]), int(z["n"]), complex(z["d"])
                y, y_sha = z["y"], str(z["y_sha"])
        except (OSError, KeyError, ValueError) as exc:
            raise CheckpointError(
                f"snapshot {self.path} is unreadable ({exc}); start a fresh run"
            ) from None
        if hashlib.sha256(np.ascontiguousarray(y).tobytes()).hexdigest() != y_sha or y.size != n + 1:
            raise CheckpointError(f"snapshot {self.path} is corrupt; start a fresh run")
        if saved != digest:
            raise CheckpointError(
                f"snapshot {self.path} checksum mismatch: it belongs to a different problem"
            )
        return y, n, d


def solve_convolution(problem: ConvolutionIDEProblem, *, max_abs: float = 1e150,
                      checkpoint: Checkpointer | None = None,
                      resume: bool = False) -> ComplexSeries:
    """Solve dy/dt = c y + source - int_0^t K(t-s) y(s) ds on ``problem.grid``.

    The memory integral is truncated to the kernel's tabulated length.
    Raises NumericalError with the step index if the solution stops being
    finite or exceeds ``max_abs``.
    """
    grid = problem.grid
    K = np.ascontiguousarray(problem.kernel.values, dtype=np.complex128)
    c = complex(problem.linear_coefficient)
    src = complex(problem.source)
    y = np.zeros(grid.n_steps, dtype=np.complex128)
    y[0] = problem.initial_value
    state = np.array([c * y[0] + src], dtype=np.complex128)
    n = 0
    total = grid.n_steps - 1
    digest = None

    if checkpoint is not None and checkpoint.enabled:
        digest = problem.digest()
        if resume and checkpoint.path.exists():
            hist, n, d = checkpoint.load(digest)
            y[: n + 1] = hist
            state[0] = d
            log.info("resumed from %s at step %d/%d", checkpoint.path, n, total)

    if digest is None:
        bad = _advance(K, c, src, y, state, 0, total, grid.dt, max_abs)
        if bad >= 0:
            _fail(bad, y, grid.dt, max_abs)
        return ComplexSeries(grid, y)

    writing = True
    started = time.perf_counter()
    first = True
    while n < total:
        stop = min(n + checkpoint.every, total)
        bad = _advance(K, c, src, y, state, n, stop, grid.dt, max_abs)
        if bad >= 0:
            _fail(bad, y, grid.dt, max_abs)
        done = stop - n
        n = stop
        if first and checkpoint.budget_s > 0:
            projected = (time.perf_counter() - started) / done * total
            writing = projected > checkpoint.budget_s
            first = False
        if writing and n < total:
            checkpoint.save(digest, y, n, state[0])
    return ComplexSeries(grid, y)


def solve_two_time(kernel_eval: Callable[[float, np.ndarray], np.ndarray], source: float,
                   initial_value: complex, grid: TimeGrid, support: float,
                   linear_coefficient: complex = 0.0, *,
                   max_abs: float = 1e150) -> ComplexSeries:
    """Same scheme as ``solve_convolution`` for a general kernel K(t, s).

    ``kernel_eval(t, s)`` receives a scalar t and an increasing array of s
    values in [t - support, t] and must return K(t, s) for each of them.
    """
    dt = grid.dt
    m = int(round(support / dt))
    times = grid.times
    c = complex(linear_coefficient)
    src = complex(source)
    y = np.zeros(grid.n_steps, dtype=np.complex128)
    y[0] = initial_value
    d = c * y[0] + src
    for n in range(grid.n_steps - 1):
        j0 = max(0, n + 1 - m)
        row = np.ascontiguousarray(kernel_eval(times[n + 1], times[j0:n + 2]),
                                   dtype=np.complex128)
        d = _step(row, c, src, y, d, n, j0, dt)
        v = y[n + 1]
        if not np.isfinite(v) or abs(v) > max_abs:
            _fail(n + 1, y, dt, max_abs)
    return ComplexSeries(grid, y)


@dataclass(frozen=True)
class ConvergenceEstimate:
    order: float
    dts: tuple
    errors: tuple
    rejected: bool


def estimate_convergence_order(make_problem: Callable[[float], ConvolutionIDEProblem],
                               exact: Callable[[np.ndarray], np.ndarray],
                               dt_list: Sequence[float],
                               floor: float = 1e-12) -> ConvergenceEstimate:
    """Fit log(max error) against log(dt) and return the slope.

    If every error sits at rounding level (below ``floor``) the fit is
    meaningless; the estimate is returned with ``rejected=True`` and a NaN order.
    """
    if len(dt_list) < 3:
        raise ValueError("need at least three step sizes to estimate an order")
    errors = []
    for dt in dt_list:
        sol = solve_convolution(make_problem(dt))
        errors.append(float(np.max(np.abs(sol.values - exact(sol.times)))))
    if max(errors) < floor:
        return ConvergenceEstimate(float("nan"), tuple(dt_list), tuple(errors), True)
    slope = np.polyfit(np.log(dt_list), np.log(errors), 1)[0]
    return ConvergenceEstimate(float(slope), tuple(dt_list), tuple(errors), False)
