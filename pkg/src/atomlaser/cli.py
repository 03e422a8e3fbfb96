"""Command-line entry point: simulate, table1, spectrum-figure, validate.

Exit codes: 0 success, 1 validation failure, 2 configuration error,
3 numerical failure, 4 pump self-consistency not reached.
"""
from __future__ import annotations

import argparse
import hashlib
import logging
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import pipeline
from .core import ConfigError, ConvergenceError, NumericalError, RunConfig, load_config
from .plotting import plot_figure
from .spectrum import SpectrumError, linewidth_fwhm, output_flux_spectrum
from .volterra import CheckpointError

log = logging.getLogger("atomlaser")

EXIT_OK, EXIT_VALIDATE, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_CONVERGENCE = 0, 1, 2, 3, 4

# r (atoms/s): (n_bar, Gamma (1/s), Gamma_BM (1/s)) of the reference table
TABLE1 = {
    2.0e4: (450.0, 2.1, 0.025),
    4.0e4: (910.0, 1.1, 0.012),
    8.0e4: (1800.0, 0.56, 0.0062),
    8.0e5: (1.8e4, 0.035, 0.00062),
}
LONG_ROWS = (8.0e5,)
FIGURE_RATES = (4.0e4, 8.0e4, 8.0e5)
TOL_NBAR, TOL_GAMMA, TOL_GAMMA_BM = 0.10, 0.20, 0.05
FIGURE_POINTS_PER_FWHM = 20


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def write_manifest(out: Path, subcommand: str, config_path, runs: list[dict]) -> None:
    """Checksums of every emitted file except snapshots and the manifest itself."""
    artifacts = {}
    for path in sorted(out.rglob("*")):
        rel = path.relative_to(out).as_posix()
        if path.is_dir() or rel == "manifest.json" or rel.startswith("checkpoints/"):
            continue
        artifacts[rel] = _sha256(path)
    manifest = {
        "subcommand": subcommand,
        "config": str(config_path) if config_path else None,
        "output_dir": str(out),
        "runs": runs,
        "artifacts": artifacts,
    }
    pipeline.write_json(out / "manifest.json", manifest)


def _dump_diagnostics(exc: Exception, out: Path) -> None:
    diag = out / "diagnostics"
    diag.mkdir(parents=True, exist_ok=True)
    with open(diag / "error.txt", "w") as fh:
        fh.write(f"{type(exc).__name__}: {exc}\n")
    partial = getattr(exc, "partial", None)
    if partial is not None:
        t, y = partial
        pipeline.write_csv(diag / "partial_series.csv", ["t_s", "re_y", "im_y"],
                           [t, np.real(y), np.imag(y)])
    details = getattr(exc, "diagnostics", None)
    if details:
        pipeline.write_json(diag / "spectrum_diagnostics.json", details)


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, (ConfigError, CheckpointError)):
        return EXIT_CONFIG
    if isinstance(exc, ConvergenceError):
        return EXIT_CONVERGENCE
    if isinstance(exc, NumericalError):
        return EXIT_NUMERICAL
    raise exc


def _run_one(config: RunConfig, out: Path, resume: bool):
    """Run and persist one pump rate; returns (status record, result or None, exit code)."""
    started = time.perf_counter()
    record = {"label": f"r={config.params.r:g}", "status": "started"}
    try:
        result = pipeline.run(config, out / "checkpoints", resume)
        pipeline.write_run(result, out)
    except (NumericalError, ConvergenceError, CheckpointError) as exc:
        _dump_diagnostics(exc, out)
        record.update(status="failed", error=f"{type(exc).__name__}: {exc}",
                      wall_s=time.perf_counter() - started)
        return record, None, _exit_code(exc)
    record.update(status="finished", wall_s=time.perf_counter() - started)
    return record, result, EXIT_OK


def _threads(n: int) -> int:
    return n if n > 0 else (os.cpu_count() or 1)


def cmd_simulate(args) -> int:
    config = load_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    record, result, code = _run_one(config, out, args.resume)
    write_manifest(out, "simulate", args.config, [record])
    if result is None:
        print(f"simulate failed: {record['error']}", file=sys.stderr)
        return code
    s = result.summary
    print(f"r = {s['r_per_s']:g} /s  n_bar = {s['n_bar']:.1f}  P = {s['P_per_s']:.3f} /s  "
          f"Gamma = {s['gamma_s']:.4g} /s  FWHM = {s['gamma_expfit_s']:.4g} /s  "
          f"Gamma_BM = {s['gamma_bm_s']:.3g} /s")
    return EXIT_OK


def parse_rows(text: str) -> list[float]:
    """Comma-separated pump rates in units of 1e3 atoms/s."""
    rows = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        try:
            value = float(item) * 1e3
        except ValueError:
            raise ConfigError("rows", f"not a number: {item!r}") from None
        if value not in TABLE1:
            raise ConfigError("rows", f"{item} is not a reference row "
                              f"(choose from {', '.join(f'{r / 1e3:g}' for r in TABLE1)})")
        rows.append(value)
    if not rows:
        raise ConfigError("rows", "empty row selection")
    return sorted(set(rows))


def _within(value, ref, tol) -> bool:
    return value is not None and math.isfinite(value) and abs(value / ref - 1) <= tol


def table_row(r: float, summary: dict | None, status: str) -> dict:
    n_ref, g_ref, gbm_ref = TABLE1[r]
    gbm_table_nbar = r / (4 * n_ref**2)
    row = {
        "r_per_s": r,
        "n_bar": math.nan,
        "gamma_s": math.nan,
        "gamma_bm_s": math.nan,
        "ratio": math.nan,
        "n_bar_table": n_ref,
        "gamma_table_s": g_ref,
        "gamma_bm_table_s": gbm_ref,
        "gamma_bm_from_table_nbar_s": gbm_table_nbar,
        "pass_n_bar": False,
        "pass_gamma": False,
        "pass_gamma_bm": False,
        "pass_gamma_bm_table_nbar": _within(gbm_table_nbar, gbm_ref, TOL_GAMMA_BM),
        "status": status,
    }
    if summary is not None:
        row.update(n_bar=summary["n_bar"], gamma_s=summary["gamma_s"],
                   gamma_bm_s=summary["gamma_bm_s"], ratio=summary["ratio"])
        row["pass_n_bar"] = _within(row["n_bar"], n_ref, TOL_NBAR)
        row["pass_gamma"] = _within(row["gamma_s"], g_ref, TOL_GAMMA)
        row["pass_gamma_bm"] = _within(row["gamma_bm_s"], gbm_ref, TOL_GAMMA_BM)
    return row


def write_table(path: Path, rows: list[dict]) -> None:
    keys = list(rows[0])
    with open(path, "w") as fh:
        fh.write(",".join(keys) + "\n")
        for row in rows:
            cells = []
            for k in keys:
                v = row[k]
                if isinstance(v, bool):
                    cells.append("pass" if v else "fail")
                elif isinstance(v, float):
                    cells.append(repr(v))
                else:
                    cells.append(str(v))
            fh.write(",".join(cells) + "\n")


def _run_rates(config: RunConfig, rates, out: Path, threads: int, resume: bool):
    def job(r):
        return _run_one(config.with_pump(r), out / f"r_{r:g}", resume)

    with ThreadPoolExecutor(max_workers=_threads(threads)) as pool:
        return list(pool.map(job, rates))


def cmd_table1(args) -> int:
    rows = parse_rows(args.rows)
    gated = [r for r in rows if r in LONG_ROWS]
    if gated and not args.long:
        raise ConfigError("rows", f"row {gated[0] / 1e3:g} needs --long")
    config = load_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    outcomes = _run_rates(config, rows, out, args.threads, args.resume)
    table = []
    code = EXIT_OK
    for r, (record, result, rc) in zip(rows, outcomes):
        table.append(table_row(r, result.summary if result else None, record["status"]))
        code = max(code, rc)
    write_table(out / "table1.csv", table)
    write_manifest(out, "table1", args.config, [o[0] for o in outcomes])
    for row in table:
        print(f"r = {row['r_per_s']:>8g}  n_bar = {row['n_bar']:9.1f} ({row['n_bar_table']:g})  "
              f"Gamma = {row['gamma_s']:.4g} ({row['gamma_table_s']:g})  "
              f"ratio = {row['ratio']:.1f}  {row['status']}")
    return code


def shared_omega_grid(results) -> np.ndarray:
    """Uniform grid fine enough for the narrowest line and wide enough for the widest."""
    widths = [res.expfit.gamma for res in results]
    centre = results[0].config.params.omega0 + float(np.mean([res.expfit.omega_shift
                                                              for res in results]))
    step = min(widths) / FIGURE_POINTS_PER_FWHM
    half = pipeline.WINDOW_WIDTHS * max(widths)
    n = 2 * int(math.ceil(half / step)) + 1
    return centre + (np.arange(n) - n // 2) * step


def cmd_spectrum_figure(args) -> int:
    config = load_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    outcomes = _run_rates(config, FIGURE_RATES, out, args.threads, args.resume)
    records = [o[0] for o in outcomes]
    failed = [o for o in outcomes if o[1] is None]
    if failed:
        write_manifest(out, "spectrum-figure", args.config, records)
        print(f"spectrum-figure failed: {failed[0][0]['error']}", file=sys.stderr)
        return max(o[2] for o in failed)
    results = [o[1] for o in outcomes]
    omega = shared_omega_grid(results)
    centre = omega[omega.size // 2]
    fluxes, widths, peaks = {}, {}, {}
    try:
        for res in results:
            spec = output_flux_spectrum(res.corr, omega, res.config.params, carrier=centre)
            r = res.config.params.r
            fluxes[r] = spec.flux
            widths[r] = linewidth_fwhm(omega, spec.flux)
            peaks[r] = spec.peak_omega - res.config.params.omega0
    except SpectrumError as exc:
        _dump_diagnostics(exc, out)
        write_manifest(out, "spectrum-figure", args.config, records)
        print(f"spectrum-figure failed: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    rates = sorted(fluxes)
    pipeline.write_csv(out / "spectrum_figure.csv",
                       ["omega_rad_s"] + [f"flux_r{r:g}_normalized" for r in rates],
                       [omega] + [fluxes[r] for r in rates])
    pipeline.write_json(out / "spectrum_figure.json", {
        "r_per_s": rates,
        "gamma_fwhm_s": [widths[r] for r in rates],
        "peak_shift_rad_s": [peaks[r] for r in rates],
        "omega_step_rad_s": float(omega[1] - omega[0]),
    })
    plot_figure(out / "spectrum_figure.png", omega, fluxes, config.params.omega0,
                span=4 * max(widths.values()))
    write_manifest(out, "spectrum-figure", args.config, records)
    for r in rates:
        print(f"r = {r:g}  FWHM = {widths[r]:.4g} /s  shift = {peaks[r]:.3f} rad/s")
    return EXIT_OK


def cmd_validate(args) -> int:
    from .validation import format_table, run_checks

    checks = run_checks(args.level)
    print(format_table(checks))
    failed = [c.name for c in checks if not c.passed]
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        pipeline.write_json(out / "validation.json", {
            "level": args.level,
            "checks": [{"name": c.name, "passed": c.passed, "value": c.value, "limit": c.limit}
                       for c in checks],
        })
        write_manifest(out, "validate", None, [{"label": args.level, "status": "finished"}])
    if failed:
        print("failed checks: " + ", ".join(failed), file=sys.stderr)
        return EXIT_VALIDATE
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="atomlaser", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, need_config=True):
        p.add_argument("--config", required=need_config, help="YAML configuration file")
        p.add_argument("--out", required=need_config, help="output directory")

    def runs(p):
        p.add_argument("--threads", type=int, default=0, help="worker threads (0 = auto)")
        p.add_argument("--resume", action="store_true",
                       help="resume the long solve from a checkpoint in OUT/checkpoints")

    p = sub.add_parser("simulate", help="one pump rate: steady state, spectrum, linewidths")
    common(p)
    p.add_argument("--resume", action="store_true",
                   help="resume the long solve from a checkpoint in OUT/checkpoints")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("table1", help="reference pump-rate table")
    common(p)
    runs(p)
    p.add_argument("--rows", default="20,40,80",
                   help="comma-separated pump rates in 1e3 atoms/s (default 20,40,80)")
    p.add_argument("--long", action="store_true", help="allow the 800e3 row")
    p.set_defaults(func=cmd_table1)

    p = sub.add_parser("spectrum-figure", help="peak-normalized spectra for three pump rates")
    common(p)
    runs(p)
    p.set_defaults(func=cmd_spectrum_figure)

    p = sub.add_parser("validate", help="run the oracle checks")
    p.add_argument("--level", choices=("quick", "full"), default="quick")
    p.add_argument("--out", help="optional directory for validation.json")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, CheckpointError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConvergenceError as exc:
        print(f"no convergence: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        if getattr(args, "out", None):
            _dump_diagnostics(exc, Path(args.out))
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
