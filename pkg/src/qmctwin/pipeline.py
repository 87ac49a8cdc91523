"""Stage orchestration: implant -> chiplet -> assembly -> spectra -> tuning.

Stages communicate only through CSV files in the output directory. Each run
ends by writing ``manifest.json`` with a SHA-256 for every file present.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import replace
from pathlib import Path

from .assembly import channel_budget, read_assembly_csv, simulate_assembly, write_assembly_csv
from .chiplet import (
    calibrate_lambda,
    coupled_emitters,
    read_yield_csv,
    write_yield_csv,
    yield_vs_channels,
)
from .config import RunConfig
from .emitters import background_to_g2
from .implant import generate_spots, read_spots_csv, write_spots_csv
from .rng import stage_seed
from .spectra import (
    chiplet_linewidth_report,
    read_fit_report_csv,
    synthesize_g2,
    write_fit_report_csv,
    write_histogram_csv,
    write_spectrum_csv,
)
from .tuning import (
    max_mutually_resonant_set,
    max_resonant_pairs,
    pair_coverage,
    write_coverage_csv,
    write_plan_csv,
)

log = logging.getLogger(__name__)

STAGES = ("implant", "chiplet", "assembly", "spectra", "tuning")
REQUIRES = {
    "implant": (),
    "chiplet": ("spots.csv",),
    "assembly": ("yield.csv",),
    "spectra": ("spots.csv", "assembly.csv"),
    "tuning": ("spots.csv", "fit_report.csv"),
}
MANIFEST = "manifest.json"
# antibunching time used for the synthesized per-channel g2 histogram
G2_TAU_NS = 5.0


class OrchestrationError(RuntimeError):
    pass


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out: Path, config: RunConfig, extra: dict | None = None) -> Path:
    files = sorted(p for p in out.rglob("*") if p.is_file() and p.name != MANIFEST)
    body = {
        "seed": config.seed,
        "config_sha256": config.digest(),
        "outputs": [{"path": p.relative_to(out).as_posix(), "sha256": sha256_file(p),
                     "bytes": p.stat().st_size} for p in files],
    }
    if extra:
        body.update(extra)
    path = out / MANIFEST
    path.write_text(json.dumps(body, indent=2, sort_keys=True) + "\n")
    return path


def _write_rows(path: Path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in r])


def _channel_emitters(config: RunConfig, out: Path):
    spec = config.implant
    spots = read_spots_csv(out / "spots.csv", spec)
    design = replace(config.design, n_channels=min(config.design.n_channels, spec.grid_cols))
    return [c[0] if c else None for c in coupled_emitters(design, spots)]


def stage_implant(config: RunConfig, out: Path) -> None:
    spots = generate_spots(config.implant, stage_seed(config.seed, "implant"), config.workers)
    write_spots_csv(spots, out / "spots.csv")


def stage_chiplet(config: RunConfig, out: Path) -> None:
    spec = config.implant
    design = config.design
    spots = read_spots_csv(out / "spots.csv", spec)
    chip = replace(design, n_channels=min(design.n_channels, spec.grid_cols))
    counts = [len(c) for c in coupled_emitters(chip, spots)]
    _write_rows(out / "coupled_counts.csv", ["channel", "count"], enumerate(counts))

    seed = stage_seed(config.seed, "chiplet")
    ch = config.chiplet
    if ch["calibrate"]:
        cal = calibrate_lambda(design, spec, config.alignment, ch["target_yield"], seed,
                               trials=config.trials, lam_hi=ch["lambda_hi"], workers=config.workers)
        _write_rows(out / "calibration.csv", ["target_yield", "lambda", "yield", "stderr", "iterations"],
                    [(float(ch["target_yield"]), cal.lam, cal.yield_fraction, cal.stderr, cal.iterations)])
        spec = replace(spec, mean_emitters_per_spot=cal.lam)
    rows = yield_vs_channels(design, spec, config.alignment, ch["channel_counts"], config.trials,
                             seed + 1, config.workers)
    write_yield_csv(rows, out / "yield.csv")


def stage_assembly(config: RunConfig, out: Path) -> None:
    table = read_yield_csv(out / "yield.csv")
    asm = config.assembly
    result = simulate_assembly(asm["sockets"], config.placement, config.taper,
                               stage_seed(config.seed, "assembly"), config.workers)
    sp = config.species
    eta = result.eta[sp.zpl_wavelength_nm] if sp.zpl_wavelength_nm in result.eta \
        else result.eta[min(result.eta)]
    budget = [channel_budget(config.implant.beta_ideal, sp.debye_waller, sp.gamma0_mean_mhz,
                             sp.gamma_mean_mhz, float(e), asm["extra_loss_db"]) for e in eta]
    write_assembly_csv(result, budget, out / "assembly.csv")
    n = config.design.n_channels
    y = next((r["yield"] for r in table if r["n_channels"] == n), float("nan"))
    placed = int(result.placed.sum())
    _write_rows(out / "assembly_summary.csv",
                ["sockets", "placed", "n_channels", "defect_free_yield", "chiplets_to_screen"],
                [(asm["sockets"], placed, n, y, asm["sockets"] / y if y > 0 else float("inf"))])


def stage_spectra(config: RunConfig, out: Path) -> None:
    sockets = read_assembly_csv(out / "assembly.csv")
    if not any(s["placed"] for s in sockets):
        log.warning("no socket was populated; spectra are synthesized for the unplaced chiplet")
    picked = _channel_emitters(config, out)
    channels = [j for j, e in enumerate(picked) if e is not None]
    emitters = [picked[j] for j in channels]
    seed = stage_seed(config.seed, "spectra")
    spec_dir = out / "spectra"
    spec_dir.mkdir(exist_ok=True)
    rows = []
    if emitters:
        rows, _ = chiplet_linewidth_report(emitters, config.scan, seed, config.workers)
        for r, j in zip(rows, channels):
            r["channel"] = j
            write_spectrum_csv(r["spectrum"], spec_dir / f"spectrum_ch{j:02d}.csv")
    write_fit_report_csv(rows, out / "fit_report.csv")
    # resonant-excitation purity floor of an unfiltered detection at 18 dB signal/background
    g2 = synthesize_g2(max(background_to_g2(18.0), 0.0), G2_TAU_NS, seed)
    write_histogram_csv(g2, out / "g2.csv")


def stage_tuning(config: RunConfig, out: Path) -> None:
    fits = {r["channel"]: r for r in read_fit_report_csv(out / "fit_report.csv") if r["converged"]}
    picked = _channel_emitters(config, out)
    ids, emitters = [], []
    for j, e in enumerate(picked):
        if e is None or j not in fits:
            continue
        ids.append(j)
        emitters.append(replace(e, zpl_offset_ghz=fits[j]["center_offset_ghz"]))
    act = config.actuator
    if emitters:
        plan = max_mutually_resonant_set(emitters, act)
        write_plan_csv(plan, emitters, out / "plan.csv", ids=ids)
        pairs = [(ids[a], ids[b]) for a, b in max_resonant_pairs(emitters, act)]
    else:
        _write_rows(out / "plan.csv", ["emitter_id", "f0_ghz", "k", "voltage", "f_target_ghz"], [])
        pairs = []
    _write_rows(out / "pairs.csv", ["emitter_a", "emitter_b"], pairs)
    p, se = pair_coverage(config.species, act, config.trials, stage_seed(config.seed, "tuning"),
                          config.workers)
    write_coverage_csv([{"species": config.species.name, "cap_ghz": float(act.cap_ghz),
                         "v_max": float(act.v_max), "trials": config.trials, "coverage": p,
                         "stderr": se}], out / "coverage.csv")


RUNNERS = {
    "implant": stage_implant,
    "chiplet": stage_chiplet,
    "assembly": stage_assembly,
    "spectra": stage_spectra,
    "tuning": stage_tuning,
}


def run_pipeline(config: RunConfig, stages=None, out=None) -> Path:
    """Run ``stages`` (default: all) in dependency order and write the manifest."""
    out = Path(config.output_dir if out is None else out)
    requested = set(STAGES if stages is None else stages)
    unknown = requested - set(STAGES)
    if unknown:
        raise OrchestrationError(f"unknown stage(s): {', '.join(sorted(unknown))}")
    out.mkdir(parents=True, exist_ok=True)
    produced: set[str] = set()
    outputs = {"implant": "spots.csv", "chiplet": "yield.csv", "assembly": "assembly.csv",
               "spectra": "fit_report.csv", "tuning": "plan.csv"}
    for stage in STAGES:
        if stage not in requested:
            continue
        for need in REQUIRES[stage]:
            if need not in produced and not (out / need).is_file():
                raise OrchestrationError(f"stage {stage!r} needs {need}, which no earlier stage produced")
        log.info("running stage %s", stage)
        RUNNERS[stage](config, out)
        produced.add(outputs[stage])
    return write_manifest(out, config, {"stages": [s for s in STAGES if s in requested]})
