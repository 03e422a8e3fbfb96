import math

import pytest

from atomlaser.core import (
    CONFIG_KEYS,
    ConfigError,
    PhysicalParams,
    RunConfig,
    TimeGrid,
    derive_constants,
    load_config,
    paper_params,
    validate_config,
)

RAW = {
    "mass_kg": 5e-26,
    "g_m_s2": 9.8 * math.sin(0.18),
    "omega0_rad_s": 2 * math.pi * 123,
    "sigma_k_per_m": 4.4e5,
    "gamma_s2": 2e4,
    "r_per_s": 2e4,
    "n_s": 47,
    "dt_s": 2.5e-5,
}


def test_derived_constants_paper_values(params):
    d = derive_constants(params)
    assert d.lam == pytest.approx(1.0545718e-9, rel=1e-12)
    assert d.beta == pytest.approx(9.23966e5, rel=1e-5)
    assert d.lam * params.sigma_k**2 == pytest.approx(204.1651, rel=1e-6)
    assert params.g == pytest.approx(1.75449, rel=1e-5)


def test_zero_gravity_flags_beta(params):
    d = derive_constants(PhysicalParams(**{**params.__dict__, "g": 0.0}))
    assert not d.beta_defined
    assert d.lam == derive_constants(params).lam


def test_derive_constants_is_pure(params):
    assert derive_constants(params) == derive_constants(params)


@pytest.mark.parametrize("field,value", [("m", 0.0), ("sigma_k", -1.0), ("gamma", 0.0),
                                         ("r", 0.0), ("n_s", -1.0), ("g", -1.0),
                                         ("hbar", 0.0), ("omega0", math.nan)])
def test_invalid_params_name_the_field(params, field, value):
    with pytest.raises(ConfigError, match=f"^{field}:"):
        PhysicalParams(**{**params.__dict__, field: value})


def test_validate_full_map():
    cfg = validate_config(RAW)
    assert isinstance(cfg, RunConfig)
    assert cfg.params == paper_params(2e4)
    assert cfg.dt == 2.5e-5
    assert cfg.t_max is None
    assert cfg.kernel_eps == 1e-6
    assert cfg.linewidth_method == "both"


def test_dt_zero_rejected():
    with pytest.raises(ConfigError, match="dt_s: dt must be positive"):
        validate_config({**RAW, "dt_s": 0})


def test_missing_r_named():
    raw = dict(RAW)
    del raw["r_per_s"]
    with pytest.raises(ConfigError, match="r_per_s"):
        validate_config(raw)


@pytest.mark.parametrize("key,value", [("t_max_s", 1e-5), ("kernel_eps", 1.0),
                                       ("selfcons_tol", 0.0), ("transient_fraction", 1.5),
                                       ("max_iters", 0), ("linewidth_method", "fft"),
                                       ("checkpoint_every", -1), ("mass_kg", "heavy"),
                                       ("typo_key", 1)])
def test_bad_values_name_the_key(key, value):
    with pytest.raises(ConfigError, match=f"^{key}:"):
        validate_config({**RAW, key: value})


def test_negative_param_maps_back_to_config_key():
    with pytest.raises(ConfigError, match="^gamma_s2:"):
        validate_config({**RAW, "gamma_s2": -1})


def test_load_yaml(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("\n".join(f"{k}: {v!r}" for k, v in RAW.items()) + "\nt_max_s: 3.0\n")
    cfg = load_config(path)
    assert cfg.t_max == 3.0
    assert set(RAW) <= set(CONFIG_KEYS)


def test_load_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "absent.yaml")


def test_time_grid():
    g = TimeGrid.covering(0.1, 1.0)
    assert g.n_steps == 11
    assert g.t_max == pytest.approx(1.0)
    with pytest.raises(ConfigError):
        TimeGrid(0.0, 10)
    with pytest.raises(ConfigError):
        TimeGrid(0.1, 1)
