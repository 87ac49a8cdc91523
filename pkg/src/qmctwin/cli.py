"""Command-line front end.

Exit codes: 0 success, 1 a reproduced claim failed, 2 bad configuration or
usage, 3 runtime or orchestration error.
"""

from __future__ import annotations

import logging
from pathlib import Path

import click

from .chiplet import CalibrationFailed, calibrate_lambda
from .config import ConfigError, build_config, read_raw
from .pipeline import STAGES, OrchestrationError, _write_rows, run_pipeline, write_manifest
from .repro import run_reproduce
from .spectra import DegenerateData, NoPeak, fit_g2, fit_lorentzian, read_histogram_csv, read_spectrum_csv
from .tuning import NoCrossing

EXIT_OK, EXIT_CLAIM, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3


def _resolve(config_path, seed, trials, out, workers):
    raw = read_raw(config_path) if config_path else {}
    for key, val in (("seed", seed), ("trials", trials), ("workers", workers)):
        if val is not None:
            raw[key] = val
    if out is not None:
        raw["output_dir"] = str(out)
    return build_config(raw)


def run_options(fn):
    fn = click.option("--workers", type=int, default=None, help="Worker threads (outputs do not depend on it).")(fn)
    fn = click.option("--out", type=click.Path(file_okay=False, path_type=Path), default=None,
                      help="Output directory.")(fn)
    fn = click.option("--trials", type=int, default=None, help="Monte Carlo trials.")(fn)
    fn = click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=None, help="Master seed.")(fn)
    fn = click.option("--config", "config_path", type=click.Path(dir_okay=False, path_type=Path), default=None,
                      help="JSON run configuration.")(fn)
    return fn


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log stage progress.")
def cli(verbose):
    """Quantum micro-chiplet digital twin."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(message)s")


def _stage_command(name: str, stage: str, doc: str):
    @run_options
    def command(config_path, seed, trials, out, workers):
        cfg = _resolve(config_path, seed, trials, out, workers)
        manifest = run_pipeline(cfg, [stage])
        click.echo(f"{stage}: wrote {manifest.parent}")
        return EXIT_OK

    command.__doc__ = doc
    cli.command(name)(command)


_stage_command("implant", "implant", "Generate implant spots (spots.csv).")
_stage_command("yield", "chiplet", "Coupled counts, lambda calibration and yield table; needs spots.csv.")
_stage_command("assemble", "assembly", "Pick-and-place sockets and channel budgets; needs yield.csv.")
_stage_command("spectra", "spectra", "Synthesize and fit per-channel PLE scans and g2; needs assembly.csv.")
_stage_command("tune", "tuning", "Strain-tuning plan, pairs and coverage; needs fit_report.csv.")


@cli.command("run")
@run_options
@click.option("--stages", default=",".join(STAGES), show_default=True,
              help="Comma-separated stages to run, in any order.")
def run_command(config_path, seed, trials, out, workers, stages):
    """Run several pipeline stages in dependency order."""
    cfg = _resolve(config_path, seed, trials, out, workers)
    wanted = [s.strip() for s in stages.split(",") if s.strip()]
    manifest = run_pipeline(cfg, wanted)
    click.echo(f"stages {', '.join(s for s in STAGES if s in wanted)}: wrote {manifest.parent}")
    return EXIT_OK


@cli.command("calibrate")
@run_options
def calibrate_command(config_path, seed, trials, out, workers):
    """Calibrate mean emitters per spot to the configured target yield."""
    cfg = _resolve(config_path, seed, trials, out, workers)
    ch = cfg.chiplet
    cal = calibrate_lambda(cfg.design, cfg.implant, cfg.alignment, ch["target_yield"], cfg.seed,
                           trials=cfg.trials, lam_hi=ch["lambda_hi"], workers=cfg.workers)
    out_dir = cfg.output_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_rows(out_dir / "calibration.csv", ["target_yield", "lambda", "yield", "stderr", "iterations"],
                [(float(ch["target_yield"]), cal.lam, cal.yield_fraction, cal.stderr, cal.iterations)])
    write_manifest(out_dir, cfg, {"command": "calibrate"})
    click.echo(f"lambda = {cal.lam:.4f}  yield = {cal.yield_fraction:.4f} +- {cal.stderr:.4f}")
    return EXIT_OK


@cli.command("fit")
@click.argument("input_csv", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--kind", type=click.Choice(["ple", "g2"]), default="ple", show_default=True)
def fit_command(input_csv, kind):
    """Fit a PLE spectrum or g2 histogram CSV and print the parameters."""
    if kind == "ple":
        r = fit_lorentzian(read_spectrum_csv(input_csv))
        rows = [("center_mhz", r.center_mhz, r.center_err), ("gamma_mhz", r.gamma_mhz, r.gamma_err),
                ("amplitude", r.amplitude, r.amplitude_err), ("background", r.background, r.background_err)]
        converged = r.converged
    else:
        r = fit_g2(read_histogram_csv(input_csv))
        rows = [("g2_zero", r.g2_zero, r.g2_zero_err), ("tau_corr_ns", r.tau_corr_ns, r.tau_corr_err),
                ("asymptote", r.asymptote, float("nan"))]
        converged = r.converged
    click.echo("parameter,value,stderr")
    for name, v, e in rows:
        click.echo(f"{name},{v!r},{e!r}")
    click.echo(f"converged,{int(converged)},")
    return EXIT_OK


@cli.command("reproduce")
@run_options
def reproduce_command(config_path, seed, trials, out, workers):
    """Recompute every reference value; exit 1 if any claim misses its tolerance."""
    cfg = _resolve(config_path, seed, trials, out, workers)
    report = run_reproduce(cfg)
    for c in report.claims:
        click.echo(f"{'PASS' if c.passed else 'FAIL'}  {c.claim}: expected {c.reference:g} "
                   f"+- {c.tolerance:g}, got {c.simulated:.6g}")
    n_fail = len(report.failures())
    click.echo(f"{len(report.claims) - n_fail}/{len(report.claims)} claims pass")
    return EXIT_OK if report.passed else EXIT_CLAIM


def main(argv=None) -> int:
    try:
        code = cli.main(args=argv, prog_name="qmctwin", standalone_mode=False)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        return EXIT_CONFIG
    except click.exceptions.Abort:
        return EXIT_RUNTIME
    except click.ClickException as exc:
        exc.show()
        return EXIT_CONFIG
    except (OrchestrationError, CalibrationFailed, NoPeak, DegenerateData, NoCrossing, OSError,
            ValueError, RuntimeError) as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_RUNTIME
    return code if isinstance(code, int) else EXIT_OK
