"""Domain types, derived constants and run-configuration validation.

Everything is kept in SI units. The types here are frozen dataclasses so they
can be shared freely between worker threads.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import yaml

HBAR = 1.0545718e-34

LINEWIDTH_METHODS = ("fft_fwhm", "exp_fit", "both")


class ConfigError(ValueError):
    """Invalid parameter or configuration value."""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


class NumericalError(RuntimeError):
    """A solve produced non-finite or otherwise unusable values.

    ``partial`` optionally carries (times, values) of the series up to the failure.
    """

    def __init__(self, message: str, partial=None):
        super().__init__(message)
        self.partial = partial


class ConvergenceError(RuntimeError):
    """The pump self-consistency loop did not settle."""


@dataclass(frozen=True)
class PhysicalParams:
    m: float
    g: float
    omega0: float
    sigma_k: float
    gamma: float
    r: float
    n_s: float
    hbar: float = HBAR

    def __post_init__(self):
        for name in ("m", "g", "omega0", "sigma_k", "gamma", "r", "n_s", "hbar"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                raise ConfigError(name, f"must be a finite number, got {value!r}")
        for name in ("m", "sigma_k", "gamma", "r", "hbar"):
            if getattr(self, name) <= 0:
                raise ConfigError(name, "must be positive")
        if self.n_s < 0:
            raise ConfigError("n_s", "must be non-negative")
        if self.g < 0:
            raise ConfigError("g", "must be non-negative")

    def with_pump(self, r: float) -> "PhysicalParams":
        return replace(self, r=float(r))


def paper_params(r: float = 2.0e4) -> PhysicalParams:
    """Parameter set of the reference atom laser (0.18 taken in radians)."""
    return PhysicalParams(
        m=5e-26,
        g=9.8 * math.sin(0.18),
        omega0=2 * math.pi * 123,
        sigma_k=4.4e5,
        gamma=2.0e4,
        r=r,
        n_s=47,
    )


@dataclass(frozen=True)
class DerivedConstants:
    lam: float
    beta: float | None

    @property
    def beta_defined(self) -> bool:
        return self.beta is not None


def derive_constants(params: PhysicalParams) -> DerivedConstants:
    """lam = hbar/(2m) and the Airy length scale beta = (2 m^2 g / hbar^2)^(1/3).

    beta is ``None`` when g = 0, since there is no gravitational length scale.
    """
    lam = params.hbar / (2 * params.m)
    beta = None
    if params.g > 0:
        beta = (2 * params.m**2 * params.g / params.hbar**2) ** (1 / 3)
    return DerivedConstants(lam=lam, beta=beta)


@dataclass(frozen=True)
class TimeGrid:
    dt: float
    n_steps: int

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError("dt", "dt must be positive")
        if self.n_steps < 2:
            raise ConfigError("n_steps", "need at least 2 grid points")

    @classmethod
    def covering(cls, dt: float, t_max: float) -> "TimeGrid":
        return cls(dt, int(math.ceil(t_max / dt - 1e-9)) + 1)

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps) * self.dt

    @property
    def t_max(self) -> float:
        return (self.n_steps - 1) * self.dt


@dataclass(frozen=True, eq=False)
class ComplexSeries:
    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.shape != (self.grid.n_steps,):
            raise ValueError(
                f"series has {values.shape} samples, grid has {self.grid.n_steps}"
            )
        if not np.all(np.isfinite(values)):
            raise NumericalError("series contains non-finite samples")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    def __len__(self):
        return self.grid.n_steps


@dataclass(frozen=True)
class RunConfig:
    params: PhysicalParams
    dt: float
    t_max: float | None = None  # None: horizon chosen from the estimated linewidth
    kernel_eps: float = 1e-6
    selfcons_tol: float = 1e-6
    max_iters: int = 50
    linewidth_method: str = "both"
    transient_fraction: float = 0.1
    checkpoint_every: int = 0
    checkpoint_budget_s: float = 0.0
    extra: Mapping[str, Any] = field(default_factory=dict, compare=False)

    def with_pump(self, r: float) -> "RunConfig":
        return replace(self, params=self.params.with_pump(r))


# config key -> (PhysicalParams field, documented default or None if required)
_PARAM_KEYS = {
    "mass_kg": ("m", None),
    "g_m_s2": ("g", None),
    "omega0_rad_s": ("omega0", None),
    "sigma_k_per_m": ("sigma_k", None),
    "gamma_s2": ("gamma", None),
    "r_per_s": ("r", None),
    "n_s": ("n_s", None),
    "hbar_Js": ("hbar", HBAR),
}

RUN_DEFAULTS = {
    "t_max_s": "auto",
    "kernel_eps": 1e-6,
    "selfcons_tol": 1e-6,
    "max_iters": 50,
    "linewidth_method": "both",
    "transient_fraction": 0.1,
    "checkpoint_every": 0,
    "checkpoint_budget_s": 0.0,
}

CONFIG_KEYS = tuple(_PARAM_KEYS) + ("dt_s",) + tuple(RUN_DEFAULTS)


def _number(raw: Mapping[str, Any], key: str) -> float:
    value = raw[key]
    if isinstance(value, bool):
        raise ConfigError(key, f"expected a number, got {value!r}")
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(key, f"expected a number, got {value!r}") from None


def validate_config(raw: Mapping[str, Any]) -> RunConfig:
    """Build a RunConfig from a flat key/value mapping.

    Required keys are the physical parameters (``hbar_Js`` excepted) and
    ``dt_s``. Defaults for the rest are listed in ``RUN_DEFAULTS``; a
    ``t_max_s`` of ``"auto"`` sizes the horizon from the measured decay rate.
    Unknown keys are rejected so typos do not silently fall back to defaults.
    """
    if not isinstance(raw, Mapping):
        raise ConfigError("config", "expected a key/value mapping")
    unknown = sorted(set(raw) - set(CONFIG_KEYS))
    if unknown:
        raise ConfigError(unknown[0], "unknown configuration key")

    kwargs = {}
    for key, (name, default) in _PARAM_KEYS.items():
        if key not in raw:
            if default is None:
                raise ConfigError(key, "missing required key")
            kwargs[name] = default
        else:
            kwargs[name] = _number(raw, key)
    try:
        params = PhysicalParams(**kwargs)
    except ConfigError as exc:
        key = next(k for k, (n, _) in _PARAM_KEYS.items() if n == exc.key)
        raise ConfigError(key, str(exc).split(": ", 1)[1]) from None

    if "dt_s" not in raw:
        raise ConfigError("dt_s", "missing required key")
    dt = _number(raw, "dt_s")
    if not dt > 0:
        raise ConfigError("dt_s", "dt must be positive")

    opts = {**RUN_DEFAULTS, **{k: raw[k] for k in RUN_DEFAULTS if k in raw}}

    t_max = opts["t_max_s"]
    if t_max in (None, "auto"):
        t_max = None
    else:
        t_max = _number(opts, "t_max_s")
        if not t_max > dt:
            raise ConfigError("t_max_s", "t_max must exceed dt")

    def unit_interval(key):
        value = _number(opts, key)
        if not 0 < value < 1:
            raise ConfigError(key, "must lie strictly between 0 and 1")
        return value

    max_iters = opts["max_iters"]
    if isinstance(max_iters, bool) or not isinstance(max_iters, int) or max_iters < 1:
        raise ConfigError("max_iters", "must be a positive integer")

    method = opts["linewidth_method"]
    if method not in LINEWIDTH_METHODS:
        raise ConfigError("linewidth_method", f"must be one of {LINEWIDTH_METHODS}")

    every = opts["checkpoint_every"]
    if isinstance(every, bool) or not isinstance(every, int) or every < 0:
        raise ConfigError("checkpoint_every", "must be a non-negative integer")
    budget = _number(opts, "checkpoint_budget_s")
    if budget < 0:
        raise ConfigError("checkpoint_budget_s", "must be non-negative")

    return RunConfig(
        params=params,
        dt=dt,
        t_max=t_max,
        kernel_eps=unit_interval("kernel_eps"),
        selfcons_tol=unit_interval("selfcons_tol"),
        max_iters=max_iters,
        linewidth_method=method,
        transient_fraction=unit_interval("transient_fraction"),
        checkpoint_every=every,
        checkpoint_budget_s=budget,
        extra=dict(raw),
    )


def load_config(path: str | Path) -> RunConfig:
    """Read a flat YAML key/value file and validate it."""
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None
    except yaml.YAMLError as exc:
        raise ConfigError("config", f"cannot parse {path}: {exc}") from None
    return validate_config(raw or {})
