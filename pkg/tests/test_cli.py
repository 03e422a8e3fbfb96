import json
from pathlib import Path

import numpy as np
import pytest
import yaml

from atomlaser import cli, pipeline
from atomlaser.core import NumericalError

CONFIG = Path(__file__).resolve().parents[1] / "configs" / "paper.yaml"


def config_with(tmp_path, **changes):
    raw = yaml.safe_load(CONFIG.read_text())
    raw.update(changes)
    path = tmp_path / "config.yaml"
    path.write_text(yaml.safe_dump(raw))
    return str(path)


def test_simulate_writes_artifacts(tmp_path, capsys):
    out = tmp_path / "out"
    assert cli.main(["simulate", "--config", config_with(tmp_path, r_per_s=2e4),
                     "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["n_bar"] == pytest.approx(450, rel=0.1)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["runs"][0]["status"] == "finished"
    assert set(manifest["artifacts"]) == {"summary.json", "N_series.csv", "correlation.csv",
                                          "n_series.csv", "kernel.csv", "spectrum.csv",
                                          "spectrum.png"}
    assert "n_bar" in capsys.readouterr().out


def test_simulate_bad_dt_exit_2(tmp_path, capsys):
    code = cli.main(["simulate", "--config", config_with(tmp_path, dt_s=0),
                     "--out", str(tmp_path / "o")])
    assert code == 2
    assert "dt_s" in capsys.readouterr().err


def test_missing_config_exit_2(tmp_path):
    assert cli.main(["simulate", "--config", str(tmp_path / "none.yaml"),
                     "--out", str(tmp_path / "o")]) == 2


def test_nonconvergence_exit_4(tmp_path):
    assert cli.main(["simulate", "--config", config_with(tmp_path, max_iters=1),
                     "--out", str(tmp_path / "o")]) == 4


def test_short_horizon_exit_3_with_diagnostics(tmp_path):
    out = tmp_path / "o"
    code = cli.main(["simulate", "--config", config_with(tmp_path, t_max_s=0.5),
                     "--out", str(out)])
    assert code == 3
    assert "longer horizon" in (out / "diagnostics" / "error.txt").read_text()


def test_numerical_failure_dumps_partial_series(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise NumericalError("non-finite value at step 3", (np.arange(4) * 0.1, np.ones(4)))

    monkeypatch.setattr(pipeline, "run", boom)
    out = tmp_path / "o"
    assert cli.main(["simulate", "--config", str(CONFIG), "--out", str(out)]) == 3
    rows = (out / "diagnostics" / "partial_series.csv").read_text().splitlines()
    assert rows[0] == "t_s,re_y,im_y" and len(rows) == 5
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["runs"][0]["status"] == "failed"


@pytest.mark.parametrize("rows", ["", " , ", "30", "abc"])
def test_table1_bad_rows_exit_2(tmp_path, rows):
    assert cli.main(["table1", "--config", str(CONFIG), "--out", str(tmp_path / "o"),
                     "--rows", rows]) == 2


def test_table1_long_row_needs_flag(tmp_path, capsys):
    assert cli.main(["table1", "--config", str(CONFIG), "--out", str(tmp_path / "o"),
                     "--rows", "800"]) == 2
    assert "--long" in capsys.readouterr().err


def test_table1_partial_table_on_failure(tmp_path):
    out = tmp_path / "o"
    code = cli.main(["table1", "--config", config_with(tmp_path, max_iters=1),
                     "--out", str(out), "--rows", "20"])
    assert code == 4
    lines = (out / "table1.csv").read_text().splitlines()
    assert lines[1].endswith(",failed")


def test_table1_is_deterministic(tmp_path):
    sums = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert cli.main(["table1", "--config", str(CONFIG), "--out", str(out),
                         "--rows", "20,40", "--threads", "2"]) == 0
        sums.append(json.loads((out / "manifest.json").read_text())["artifacts"])
    assert sums[0] == sums[1]
    assert "table1.csv" in sums[0]


def test_resume_reproduces_uninterrupted_run(tmp_path, monkeypatch):
    cfg = config_with(tmp_path, r_per_s=8e4, checkpoint_every=50000)
    plain, resumed = tmp_path / "plain", tmp_path / "resumed"
    assert cli.main(["simulate", "--config", cfg, "--out", str(plain)]) == 0

    class Interrupting(pipeline.Checkpointer):
        def __init__(self, *args, **kwargs):
            super().__init__(*args, **kwargs)
            self.on_snapshot = self.stop

        def stop(self, n):
            if n >= 150000:
                raise KeyboardInterrupt

    with monkeypatch.context() as m:
        m.setattr(pipeline, "Checkpointer", Interrupting)
        with pytest.raises(KeyboardInterrupt):
            cli.main(["simulate", "--config", cfg, "--out", str(resumed)])
    assert list((resumed / "checkpoints").glob("*.npz"))
    assert cli.main(["simulate", "--config", cfg, "--out", str(resumed), "--resume"]) == 0
    a = json.loads((plain / "manifest.json").read_text())["artifacts"]
    b = json.loads((resumed / "manifest.json").read_text())["artifacts"]
    assert a == b


def test_validate_quick(capsys):
    assert cli.main(["validate", "--level", "quick"]) == 0
    assert "FAIL" not in capsys.readouterr().out


def test_validate_reports_failures(monkeypatch, tmp_path, capsys):
    from atomlaser import validation

    def tampered(level):
        params = validation.paper_params()
        return [validation.check_f0(params, lambda dt, p: 1.01 * p.gamma)]

    monkeypatch.setattr(validation, "run_checks", tampered)
    assert cli.main(["validate", "--out", str(tmp_path)]) == 1
    assert "kernel f(0)" in capsys.readouterr().err
    report = json.loads((tmp_path / "validation.json").read_text())
    assert report["checks"][0]["passed"] is False
