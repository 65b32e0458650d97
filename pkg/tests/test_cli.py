import csv
import json
import os

import pytest

from drivevol import cli, pipeline
from drivevol.measures import MEASURE_NAMES, NAME_RE
from drivevol.synth import CorpusSpec, ProfileSpec, write_corpus


def run(*args):
    return cli.main([str(a) for a in args])


@pytest.fixture(scope="module")
def corpus_run(small_corpus, tmp_path_factory):
    d, truth = small_corpus
    ini = d / "drivevol.ini"
    from drivevol.config import PipelineConfig, write_config
    from drivevol.models import ModelSpec
    write_config(PipelineConfig(bsm=["bsm.csv"], sites="sites.csv", out="out",
                                model=ModelSpec(covariates=["aadt_major_k", "L1-AccDec-Sdev"])), str(ini))
    out = tmp_path_factory.mktemp("run")
    assert run("all", "-c", ini, "--out", out, "--workers", 1) == 0
    return ini, out, truth


def manifest(out, stage):
    return json.loads((out / stage / "manifest.json").read_text())


def test_all_outputs(corpus_run):
    _, out, _ = corpus_run
    for stage, names in {
        "ingest": ["rejects.csv", "assignment_stats.json", "assigned"],
        "measure": ["measures.csv", "passings.csv", "measure_counts.json"],
        "fit": ["fit.json", "fit_table.txt", "design.csv"],
        "report": ["correlations.csv", "vif.csv", "expected_actual.csv", "hotspots.csv", "summary.json",
                   "fig4_correlations.svg", "fig5_expected_actual.svg", "fig4_correlations.png",
                   "fig5_expected_actual.png"],
    }.items():
        for n in names + ["manifest.json"]:
            assert (out / stage / n).exists(), (stage, n)
        assert not any(p.endswith(".partial") for p in os.listdir(out / stage))


def test_measure_csv_columns(corpus_run):
    _, out, _ = corpus_run
    with open(out / "measure" / "measures.csv") as fh:
        rows = list(csv.DictReader(fh))
    cols = [c for c in rows[0] if NAME_RE.fullmatch(c)]
    assert cols == list(MEASURE_NAMES)
    assert sum(c.startswith("L1-") for c in cols) == 14 and sum(c.startswith("L2-") for c in cols) == 23
    assert len(rows) == 8 and all(r["qualifies"] == "1" for r in rows)


def test_manifests_chain_and_accounting(corpus_run):
    _, out, _ = corpus_run
    ing, mea = manifest(out, "ingest"), manifest(out, "measure")
    c = ing["counts"]
    assert c["accepted"] + c["rejected"] == c["data_lines"]
    m = mea["counts"]
    assert m["site_assigned"] == c["site_assigned"]
    assert m["records_in_passings"] + m["discarded_records"] == m["site_assigned"]
    assert mea["input_manifest"] == pipeline.sha256_file(str(out / "ingest" / "manifest.json"))
    assert manifest(out, "fit")["input_manifest"] == pipeline.sha256_file(str(out / "measure" / "manifest.json"))
    for stage in pipeline.STAGES:
        mf = manifest(out, stage)
        assert {"config", "outputs", "wall_time_s", "counts"} <= set(mf)


def test_fit_refuses_tampered_measures(corpus_run, tmp_path):
    ini, out, _ = corpus_run
    import shutil
    copy = tmp_path / "out"
    shutil.copytree(out, copy)
    p = copy / "measure" / "measures.csv"
    p.write_text(p.read_text().replace(",1,", ",0,", 1))
    assert run("fit", "-c", ini, "--out", copy) == 3


def test_worker_count_does_not_change_outputs(corpus_run, tmp_path):
    ini, out, _ = corpus_run
    assert run("all", "-c", ini, "--out", tmp_path, "--workers", 3) == 0
    for rel in ("measure/measures.csv", "fit/fit.json", "ingest/rejects.csv", "report/correlations.csv"):
        assert (tmp_path / rel).read_bytes() == (out / rel).read_bytes(), rel


def test_config_errors_exit_2(tmp_path):
    assert run("ingest", "-c", tmp_path / "missing.ini") == 2
    assert run("ingest", "--set", "geofence.reach_ft=-4") == 2
    assert run("ingest", "--set", "novalue") == 2
    assert run("bogus") == 2


def test_measure_without_ingest_exit_3(tmp_path):
    assert run("measure", "--out", tmp_path) == 3


def test_convergence_error_exit_4(corpus_run, tmp_path):
    ini, out, _ = corpus_run
    import shutil
    shutil.copytree(out, tmp_path / "o")
    assert run("fit", "-c", ini, "--out", tmp_path / "o", "--set", "model.max_iter=1") == 4


def test_failed_stage_keeps_partial(corpus_run, tmp_path, monkeypatch):
    ini, out, _ = corpus_run
    import shutil
    shutil.copytree(out, tmp_path / "o")

    def boom(*a, **k):
        raise OSError("disk full")

    monkeypatch.setattr(pipeline.plotting, "render_correlation_bars", boom)
    with pytest.raises(OSError):
        run("report", "-c", ini, "--out", tmp_path / "o")
    left = os.listdir(tmp_path / "o" / "report")
    assert "correlations.csv.partial" in left and "manifest.json" not in left


def test_zero_noise_corpus_gives_zero_dispersion(tmp_path):
    spec = CorpusSpec(n_sites=2, passings_per_site=5, n_devices=2, noise_range=(0.0, 0.0),
                      profile=ProfileSpec(stop_probability=0.0))
    write_corpus(spec, str(tmp_path))
    assert run("ingest", "--set", f"paths.bsm={tmp_path / 'bsm.csv'}", "--set", f"paths.sites={tmp_path / 'sites.csv'}",
               "--out", tmp_path / "out") == 0
    assert run("measure", "--out", tmp_path / "out") == 0
    with open(tmp_path / "out" / "measure" / "measures.csv") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        assert r["qualifies"] == "0"
        for n in ("L1-Speed-Sdev", "L1-AccDec-Sdev", "L1-Speed-Dmean", "L2-Speed-Sdev", "L2-Speed-Vf",
                  "L2-AccDec-Sdev", "L2-Jerk-Sdev", "L1-Speed-%T(2Sdev)"):
            assert abs(float(r[n])) < 1e-9, n


def test_fit_recovers_generating_coefficients(tmp_path):
    spec = CorpusSpec(n_sites=40, passings_per_site=30, n_devices=20, seed=11,
                      beta_true=(0.6, 0.04, 0.5, 0.0), profile=ProfileSpec(stop_probability=0.0))
    truth = write_corpus(spec, str(tmp_path))
    args = ["--set", f"paths.bsm={tmp_path / 'bsm.csv'}", "--set", f"paths.sites={tmp_path / 'sites.csv'}",
            "--set", "model.covariates=aadt_major_k, signalized", "--out", tmp_path / "out", "--workers", 1]
    for stage in ("ingest", "measure", "fit"):
        assert run(stage, *args) == 0
    res = json.loads((tmp_path / "out" / "fit" / "fit.json").read_text())["fit"]
    for name, true in zip(["const", "aadt_major_k", "signalized"], truth["beta_true"]):
        assert abs(res["beta"][name] - true) < 3 * res["se"][name], name


def test_synth_subcommand(tmp_path, capsys):
    assert run("synth", tmp_path / "c", "--sites", 2, "--passings", 3, "--devices", 2) == 0
    assert (tmp_path / "c" / "drivevol.ini").exists() and (tmp_path / "c" / "ground_truth.json").exists()
    assert "records" in capsys.readouterr().out
