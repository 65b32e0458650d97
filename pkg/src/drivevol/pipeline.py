"""Stage runners behind the CLI: ingest -> measure -> fit -> report.

Each stage reads its predecessor's artifacts from ``<out>/<stage>/`` and
writes its own next to a ``manifest.json`` (config snapshot, input
checksums, row counts, wall time). Outputs are first written with a
``.partial`` suffix and renamed only when the stage succeeds, so a failed
stage leaves its partial artifacts behind for inspection.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
import shutil
import time
from concurrent.futures import ProcessPoolExecutor
from urllib.parse import quote

import numpy as np
import pandas as pd

from . import analysis, plotting
from .config import PipelineConfig
from .errors import DataError
from .geofence import AssignmentStats, assign_chunk, build_territory
from .ingest import BSM_FIELDS, REJECT_REASONS, BsmReader, parse_site_inventory
from .measures import MEASURE_NAMES, NAME_RE, VolatilityVector, site_vector
from .models import (INTERCEPT, POISSON, RANDOM_POISSON, DesignMatrix, FitResult, ModelSpec, fit,
                     fit_poisson, format_table, lm_overdispersion_test, round_counts)
from .segmentation import SegmentStats, segment_arrays

log = logging.getLogger(__name__)

STAGES = ("ingest", "measure", "fit", "report")
PARTIAL = ".partial"
MEASURE_HEAD = ["site_id", "n_records", "n_passings", "qualifies"]


def sha256_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _fmt(v: float) -> str:
    return "" if v is None or (isinstance(v, float) and math.isnan(v)) else repr(float(v))


class StageDir:
    """Output directory of one stage with write-then-rename semantics."""

    def __init__(self, out: str, stage: str):
        self.stage = stage
        self.root = os.path.join(out, stage)
        self.out = out
        if os.path.isdir(self.root):
            shutil.rmtree(self.root)
        os.makedirs(self.root)
        self._pending: list[str] = []
        self.t0 = time.perf_counter()

    def path(self, name: str) -> str:
        final = os.path.join(self.root, name)
        self._pending.append(final)
        return final + PARTIAL

    def commit(self, manifest: dict) -> dict:
        for final in self._pending:
            os.replace(final + PARTIAL, final)
        outputs = {}
        for final in self._pending:
            if os.path.isfile(final):
                outputs[os.path.basename(final)] = sha256_file(final)
        manifest = dict(manifest, stage=self.stage, outputs=outputs,
                        wall_time_s=round(time.perf_counter() - self.t0, 3))
        with open(os.path.join(self.root, "manifest.json"), "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
        return manifest


def load_manifest(out: str, stage: str) -> tuple[dict, str]:
    path = os.path.join(out, stage, "manifest.json")
    if not os.path.exists(path):
        raise DataError(f"{stage} stage has no manifest at {path}; run `{stage}` first")
    with open(path) as fh:
        return json.load(fh), sha256_file(path)


def _verify(out: str, stage: str, manifest: dict, name: str) -> str:
    path = os.path.join(out, stage, name)
    expected = manifest.get("outputs", {}).get(name)
    if expected is None or not os.path.exists(path) or sha256_file(path) != expected:
        raise DataError(f"{path} does not match the {stage} manifest")
    return path


def _pool_map(fn, jobs, workers):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(*j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as ex:
        return list(ex.map(fn, *zip(*jobs)))


def _site_dir(site_id: str) -> str:
    return quote(site_id, safe="")


# ------------------------------------------------------------------ ingest

def _ingest_file(index, path, schema, territories, policy, chunk_size, assigned_dir, reject_path):
    reader = BsmReader(path, schema)
    stats = AssignmentStats()
    handles = {}
    try:
        for chunk in reader.chunks(chunk_size):
            hits = assign_chunk(chunk, territories, policy, stats)
            for terr, idx in zip(territories, hits):
                if not len(idx):
                    continue
                fh = handles.get(terr.site_id)
                if fh is None:
                    d = os.path.join(assigned_dir, _site_dir(terr.site_id))
                    os.makedirs(d, exist_ok=True)
                    fh = handles[terr.site_id] = open(os.path.join(d, f"part-{index:04d}.csv"), "w", newline="")
                    fh.write(reader.header + "\n")
                raw = chunk.raw
                fh.write("\n".join(raw[i] for i in idx.tolist()) + "\n")
    finally:
        for fh in handles.values():
            fh.close()
    with open(reject_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for r in reader.rejects:
            w.writerow([os.path.basename(path), r.line_number, r.reason, r.raw])
    reasons = {k: 0 for k in REJECT_REASONS}
    for r in reader.rejects:
        reasons[r.reason] += 1
    return {
        "file": path, "data_lines": reader.n_lines, "accepted": reader.n_accepted,
        "rejected": reader.n_rejected, "reject_reasons": reasons, "assignment": stats.to_dict(),
    }


def run_ingest(cfg: PipelineConfig) -> dict:
    cfg.validate()
    sites, site_rejects = parse_site_inventory(cfg.sites)
    if not sites:
        raise DataError("no valid sites in the inventory")
    territories = [build_territory(s, cfg.reach_ft, cfg.arm_width_m) for s in sites]
    stage = StageDir(cfg.out, "ingest")
    assigned_final = os.path.join(stage.root, "assigned")
    assigned_tmp = assigned_final + PARTIAL
    os.makedirs(assigned_tmp)
    jobs = []
    for k, path in enumerate(cfg.bsm):
        jobs.append((k, path, cfg.bsm_schema, territories, cfg.overlap, cfg.chunk_size, assigned_tmp,
                     os.path.join(stage.root, f"rejects-{k:04d}.tmp")))
    results = _pool_map(_ingest_file, jobs, cfg.workers)

    with open(stage.path("rejects.csv"), "w", newline="") as out:
        out.write("source,line_number,reason,raw\n")
        for job in jobs:
            with open(job[-1]) as fh:
                shutil.copyfileobj(fh, out)
            os.remove(job[-1])
    with open(stage.path("site_rejects.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["line_number", "reason", "raw"])
        for r in site_rejects:
            w.writerow([r.line_number, r.reason, r.raw])
    total = AssignmentStats()
    for r in results:
        s = r["assignment"]
        total.merge(AssignmentStats(s["records_in"], s["records_outside"], s["pairs_emitted"], s["per_site"]))
    with open(stage.path("assignment_stats.json"), "w") as fh:
        json.dump(total.to_dict(), fh, indent=2, sort_keys=True)
    os.replace(assigned_tmp, assigned_final)

    manifest = {
        "config": cfg.snapshot(),
        "inputs": {p: sha256_file(p) for p in cfg.bsm + [cfg.sites]},
        "sites": [s.site_id for s in sites],
        "site_dirs": {s.site_id: _site_dir(s.site_id) for s in sites},
        "files": results,
        "counts": {
            "data_lines": sum(r["data_lines"] for r in results),
            "accepted": sum(r["accepted"] for r in results),
            "rejected": sum(r["rejected"] for r in results),
            "outside_all_sites": total.records_out,
            "site_assigned": total.emitted,
            "sites": len(sites),
            "sites_rejected": len(site_rejects),
        },
    }
    return stage.commit(manifest)


# ----------------------------------------------------------------- measure

def load_site_records(part_paths: list[str], schema: dict[str, str]) -> dict[str, np.ndarray]:
    cols = {schema[f]: f for f in BSM_FIELDS}
    frames = []
    for p in part_paths:
        df = pd.read_csv(p, usecols=list(cols), dtype={schema["device_id"]: str},
                         float_precision="round_trip", keep_default_na=False)
        frames.append(df.rename(columns=cols))
    if not frames:
        return {f: np.empty(0, dtype=object if f == "device_id" else float) for f in BSM_FIELDS}
    df = pd.concat(frames, ignore_index=True)
    t = df["t"].to_numpy()
    if t.dtype.kind == "f":
        t = np.floor(t)
    return {
        "device_id": df["device_id"].str.strip().to_numpy(dtype=object),
        "t": t.astype(np.int64),
        "lat": df["lat"].to_numpy(dtype=float),
        "lon": df["lon"].to_numpy(dtype=float),
        "speed": df["speed"].to_numpy(dtype=float),
        "accel_long": df["accel_long"].to_numpy(dtype=float),
    }


def _measure_site(site_id, part_paths, schema, params, gap_s, min_points):
    rec = load_site_records(part_paths, schema)
    stats = SegmentStats()
    passings = segment_arrays(site_id, rec["device_id"], rec["t"], rec["speed"], rec["accel_long"],
                              gap_threshold=gap_s, min_points=min_points, stats=stats)
    vec = site_vector(site_id, rec["speed"], rec["accel_long"], passings, params)
    summary = [(p.device_id, p.start_t, p.end_t, p.n_points) for p in passings]
    return vec, summary, stats


def run_measure(cfg: PipelineConfig) -> dict:
    ingest, ingest_hash = load_manifest(cfg.out, "ingest")
    schema = ingest["config"]["bsm_schema"]
    assigned = os.path.join(cfg.out, "ingest", "assigned")
    stage = StageDir(cfg.out, "measure")
    jobs = []
    for site_id in ingest["sites"]:
        d = os.path.join(assigned, ingest["site_dirs"][site_id])
        parts = sorted(os.path.join(d, f) for f in os.listdir(d)) if os.path.isdir(d) else []
        jobs.append((site_id, parts, schema, cfg.measures, cfg.gap_s, cfg.min_points))
    results = _pool_map(_measure_site, jobs, cfg.workers)

    vectors = [r[0] for r in results]
    seg = SegmentStats()
    for r in results:
        seg.merge(r[2])
    with open(stage.path("measures.csv"), "w", newline="") as fh:
        fh.write(",".join(MEASURE_HEAD + list(MEASURE_NAMES)) + "\n")
        for v in vectors:
            row = [v.site_id, str(v.n_records), str(v.n_passings), str(int(v.qualifies(cfg.measures)))]
            row += [_fmt(v.values[n]) for n in MEASURE_NAMES]
            fh.write(",".join(row) + "\n")
    with open(stage.path("measure_counts.json"), "w") as fh:
        json.dump({v.site_id: v.counts for v in vectors}, fh, indent=1, sort_keys=True)
    with open(stage.path("passings.csv"), "w", newline="") as fh:
        fh.write("site_id,device_id,start_t,end_t,n_points\n")
        for v, (_, summary, _) in zip(vectors, results):
            for dev, a, b, n in summary:
                fh.write(f"{v.site_id},{dev},{a},{b},{n}\n")

    manifest = {
        "config": cfg.snapshot(),
        "input_manifest": ingest_hash,
        "counts": {
            "site_assigned": seg.records_in,
            "records_in_passings": seg.records_in_passings,
            "discarded_runs": seg.discarded_runs,
            "discarded_records": seg.discarded_records,
            "passings": sum(v.n_passings for v in vectors),
            "sites": len(vectors),
            "qualifying_sites": sum(v.qualifies(cfg.measures) for v in vectors),
        },
    }
    return stage.commit(manifest)


def read_measures(path: str) -> list[VolatilityVector]:
    vectors = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            values = {n: float(row[n]) if row[n] != "" else math.nan for n in MEASURE_NAMES}
            v = VolatilityVector(row["site_id"], values, n_records=int(row["n_records"]),
                                 n_passings=int(row["n_passings"]))
            v.qualifying = row["qualifies"] == "1"
            vectors.append(v)
    return vectors


# --------------------------------------------------------------------- fit

def covariate_table(cfg: PipelineConfig, vectors: list[VolatilityVector]):
    """Per-site covariates: inventory attributes, AADT in thousands, and the 37 measures."""
    sites, _ = parse_site_inventory(cfg.sites)
    by_id = {s.site_id: s for s in sites}
    rows = {}
    for v in vectors:
        s = by_id.get(v.site_id)
        if s is None:
            continue
        cov = s.attributes()
        cov["aadt_major_k"] = s.aadt_major / 1000.0
        cov["aadt_minor_k"] = s.aadt_minor / 1000.0
        cov.update(v.values)
        rows[v.site_id] = (cov, s.crash_avg, getattr(v, "qualifying", True))
    return rows


def build_design(cfg: PipelineConfig, vectors: list[VolatilityVector], spec: ModelSpec):
    rows = covariate_table(cfg, vectors)
    if not rows:
        raise DataError("no measured site appears in the site inventory")
    known = set(next(iter(rows.values()))[0])
    unknown = [c for c in spec.covariates if c not in known]
    if unknown:
        raise DataError(f"model covariates not available: {unknown}")
    ids, cols, crash = [], {c: [] for c in spec.covariates}, []
    excluded = {}
    for site_id, (cov, crash_avg, qualifies) in rows.items():
        if not qualifies:
            excluded[site_id] = "insufficient BSM data (records/passings below threshold)"
            continue
        missing = [c for c in spec.covariates if not math.isfinite(cov[c])]
        if missing:
            excluded[site_id] = f"undefined covariates: {missing}"
            continue
        ids.append(site_id)
        crash.append(crash_avg)
        for c in spec.covariates:
            cols[c].append(cov[c])
    for site_id, why in excluded.items():
        log.warning("site %s excluded from model: %s", site_id, why)
    if len(ids) <= len(spec.covariates) + 1:
        raise DataError(f"only {len(ids)} sites available for {len(spec.covariates)} covariates")
    y = round_counts(crash)
    data = DesignMatrix.build(cols, y, intercept=spec.intercept, row_ids=ids)
    return data, np.asarray(crash, dtype=float), excluded


def run_fit(cfg: PipelineConfig) -> dict:
    measure, measure_hash = load_manifest(cfg.out, "measure")
    path = _verify(cfg.out, "measure", measure, "measures.csv")
    vectors = read_measures(path)
    spec = cfg.model
    data, crash_avg, excluded = build_design(cfg, vectors, spec)
    stage = StageDir(cfg.out, "fit")
    rounded = int(np.sum(crash_avg != np.floor(crash_avg)))
    result = fit(data, spec)
    pois = result if spec.family == POISSON else fit_poisson(data, ModelSpec(
        covariates=spec.covariates, intercept=spec.intercept))
    lm_stat, lm_p = lm_overdispersion_test(pois, data)
    payload = {
        "fit": json.loads(result.to_json()),
        "lm_overdispersion": {"statistic": lm_stat, "p_value": lm_p},
        "excluded_sites": dict(sorted(excluded.items())),
        "count_rounding": {"rule": "floor(crash_avg + 0.5)", "non_integral_rows": rounded},
        "model_spec": {"family": spec.family, "covariates": spec.covariates,
                       "random_covariates": spec.random_covariates, "n_draws": spec.n_draws,
                       "halton_skip": spec.halton_skip, "intercept": spec.intercept},
    }
    with open(stage.path("fit.json"), "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(stage.path("fit_table.txt"), "w") as fh:
        fh.write(format_table(result))
    with open(stage.path("design.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["site_id", "y", "crash_avg"] + data.names)
        for i, sid in enumerate(data.row_ids):
            w.writerow([sid, int(data.y[i]), repr(float(crash_avg[i]))] + [repr(float(x)) for x in data.X[i]])
    manifest = {
        "config": cfg.snapshot(),
        "input_manifest": measure_hash,
        "counts": {"sites_used": data.n, "sites_excluded": len(excluded)},
        "converged": result.converged,
        "iterations": result.iterations,
        "grad_norm": result.grad_norm,
    }
    return stage.commit(manifest)


def read_fit(out: str) -> tuple[FitResult, DesignMatrix, dict]:
    manifest, _ = load_manifest(out, "fit")
    with open(_verify(out, "fit", manifest, "fit.json")) as fh:
        payload = json.load(fh)
    df = pd.read_csv(_verify(out, "fit", manifest, "design.csv"), dtype={"site_id": str},
                     float_precision="round_trip")
    res = FitResult.from_dict(payload["fit"])
    data = DesignMatrix(df[res.names].to_numpy(dtype=float), res.names, df["y"].to_numpy(),
                        df["site_id"].tolist())
    return res, data, payload


# ------------------------------------------------------------------ report

def run_report(cfg: PipelineConfig) -> dict:
    measure, _ = load_manifest(cfg.out, "measure")
    vectors = read_measures(_verify(cfg.out, "measure", measure, "measures.csv"))
    _, fit_hash = load_manifest(cfg.out, "fit")
    res, data, payload = read_fit(cfg.out)
    stage = StageDir(cfg.out, "report")

    table = covariate_table(cfg, vectors)
    used = [v for v in vectors if v.site_id in table and table[v.site_id][2]]
    crashes = [table[v.site_id][1] for v in used]
    ranking = analysis.correlation_rank(used, crashes, method=cfg.correlation)
    with open(stage.path("correlations.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rank", "measure", "r", "n", "sign", "defined"])
        for i, e in enumerate(ranking, 1):
            w.writerow([i, e.name, _fmt(e.r), e.n, e.sign, int(e.defined)])

    covs = [n for n in data.names if n != INTERCEPT]
    vif = analysis.vif_screen(data) if covs and data.n >= len(covs) + 2 else []
    with open(stage.path("vif.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["covariate", "vif", "flagged"])
        for e in vif:
            w.writerow([e.name, "inf" if math.isinf(e.vif) else repr(e.vif), int(e.flagged)])

    models = {res.family: res}
    if res.family == RANDOM_POISSON:
        models[POISSON] = fit_poisson(data, ModelSpec(covariates=covs, intercept=INTERCEPT in res.names))
    evas = {name: analysis.expected_vs_actual(m, data) for name, m in models.items()}
    with open(stage.path("expected_actual.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["site_id", "actual"] + [f"expected_{n}" for n in evas])
        first = next(iter(evas.values()))
        for i, sid in enumerate(first.row_ids):
            w.writerow([sid, int(first.actual[i])] + [repr(float(e.expected[i])) for e in evas.values()])

    by_id = {v.site_id: v for v in used}
    hs_vectors = [by_id[s] for s in data.row_ids]
    measures = cfg.hotspot_measures
    if measures is None:
        measures = analysis.significant_measures(res) or [n for n in res.names if NAME_RE.fullmatch(n)]
    hot = analysis.hotspot_report(hs_vectors, [table[s][1] for s in data.row_ids], res, data, measures)
    with open(stage.path("hotspots.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["site_id", "crash_avg", "expected", "crash_percentile"]
                   + [f"pct_{m}" for m in measures] + ["flagged", "flagged_by"])
        for h in hot:
            w.writerow([h.site_id, repr(h.crash_avg), _fmt(h.expected), _fmt(h.crash_percentile)]
                       + [_fmt(h.percentiles[m]) for m in measures] + [int(h.flagged), ";".join(h.flagged_by)])

    with open(stage.path("fig4_correlations.svg"), "w") as fh:
        fh.write(plotting.correlation_bars_svg(ranking))
    actual = list(first.actual)
    with open(stage.path("fig5_expected_actual.svg"), "w") as fh:
        fh.write(plotting.expected_actual_svg(actual, {n: list(e.expected) for n, e in evas.items()}))
    plotting.render_correlation_bars(ranking, stage.path("fig4_correlations.png"))
    plotting.render_expected_actual(actual, {n: e.expected for n, e in evas.items()},
                                    stage.path("fig5_expected_actual.png"))
    summary = {
        "models": {n: {"mae": e.mae, "rmse": e.rmse} for n, e in evas.items()},
        "flagged_sites": [h.site_id for h in hot if h.flagged],
        "hotspot_measures": list(measures),
        "vif_flagged": [e.name for e in vif if e.flagged],
    }
    with open(stage.path("summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    return stage.commit({"config": cfg.snapshot(), "input_manifest": fit_hash,
                         "counts": {"sites": data.n, "measures_ranked": len(ranking)}})


def run_all(cfg: PipelineConfig) -> dict:
    return {"ingest": run_ingest(cfg), "measure": run_measure(cfg), "fit": run_fit(cfg),
            "report": run_report(cfg)}
