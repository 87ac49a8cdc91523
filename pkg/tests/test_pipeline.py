import csv
import json
from pathlib import Path

import pytest

from qmctwin.config import build_config, load_schema
from qmctwin.pipeline import MANIFEST, OrchestrationError, run_pipeline, sha256_file

FAST = {"trials": 20_000, "assembly": {"sockets": 12}}


def cfg(**extra):
    return build_config({**FAST, **extra})


def test_implant_only(tmp_path):
    run_pipeline(cfg(), ["implant"], tmp_path)
    assert sorted(p.name for p in tmp_path.iterdir()) == ["manifest.json", "spots.csv"]


@pytest.fixture(scope="module")
def full_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("full")
    run_pipeline(cfg(), None, out)
    return out


def test_full_pipeline_outputs(full_run):
    names = {p.name for p in full_run.iterdir()}
    for f in ("spots.csv", "coupled_counts.csv", "calibration.csv", "yield.csv", "assembly.csv",
              "assembly_summary.csv", "fit_report.csv", "g2.csv", "plan.csv", "pairs.csv", "coverage.csv"):
        assert f in names
    assert any((full_run / "spectra").glob("spectrum_ch*.csv"))


def test_manifest_lists_every_output(full_run):
    body = json.loads((full_run / MANIFEST).read_text())
    files = {p.relative_to(full_run).as_posix() for p in full_run.rglob("*") if p.is_file()} - {MANIFEST}
    assert {o["path"] for o in body["outputs"]} == files
    for o in body["outputs"]:
        assert sha256_file(full_run / o["path"]) == o["sha256"]
    assert body["stages"] == ["implant", "chiplet", "assembly", "spectra", "tuning"]


def test_headers_match_output_schema(full_run):
    schema = load_schema("outputs.schema.json")
    for p in full_run.rglob("*.csv"):
        key = "spectrum_*.csv" if p.name.startswith("spectrum_") else p.name
        with open(p, newline="") as fh:
            header = next(csv.reader(fh))
        assert header == list(schema[key]), p.name


def test_calibrated_yield_in_table(full_run):
    with open(full_run / "yield.csv", newline="") as fh:
        rows = {int(r["n_channels"]): float(r["yield"]) for r in csv.DictReader(fh)}
    assert rows[8] == pytest.approx(0.40, abs=0.02)
    assert rows[16] < rows[8]


def test_missing_dependency(tmp_path):
    with pytest.raises(OrchestrationError, match="spots.csv"):
        run_pipeline(cfg(), ["chiplet"], tmp_path)
    with pytest.raises(OrchestrationError, match="unknown"):
        run_pipeline(cfg(), ["paint"], tmp_path)


def test_stages_can_resume_from_disk(tmp_path, full_run):
    run_pipeline(cfg(), ["implant", "chiplet"], tmp_path)
    run_pipeline(cfg(), ["assembly"], tmp_path)
    assert (tmp_path / "assembly.csv").read_bytes() == (full_run / "assembly.csv").read_bytes()


def test_rerun_and_workers_give_identical_manifests(tmp_path, full_run):
    a = tmp_path / "a"
    run_pipeline(cfg(workers=4), None, a)
    assert (a / MANIFEST).read_bytes() == (full_run / MANIFEST).read_bytes()


def test_different_seed_changes_outputs(tmp_path, full_run):
    run_pipeline(cfg(seed=7), ["implant"], tmp_path)
    assert (tmp_path / "spots.csv").read_bytes() != (full_run / "spots.csv").read_bytes()
