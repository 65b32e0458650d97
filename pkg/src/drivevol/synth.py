"""Synthetic trajectories and crash counts with known ground truth.

Random numbers come from numpy's PCG64 generator (``default_rng``);
device ``k`` of a corpus uses the seed ``seed ^ (k + 1)``.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .errors import ConvergenceError
from .geofence import DEFAULT_REACH_FT, FT_TO_M, LocalFrame
from .ingest import MAX_ABS_ACCEL, BsmRecord, IntersectionSite, write_site_inventory
from .models import MAX_ETA


@dataclass(frozen=True)
class ProfileSpec:
    approach_speed: float = 13.4
    decel_rate: float = 2.0
    accel_rate: float = 1.5
    stop_probability: float = 0.3
    dwell_s: float = 3.0
    noise_sigma_speed: float = 0.0
    noise_sigma_accel: float = 0.0
    sample_hz: float = 10.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.approach_speed <= 0 or self.decel_rate <= 0 or self.accel_rate <= 0 or self.sample_hz <= 0:
            raise ValueError("speeds, rates and sample rate must be positive")
        if not 0.0 <= self.stop_probability <= 1.0:
            raise ValueError("stop_probability must be in [0, 1]")
        if self.dwell_s < 0 or self.noise_sigma_speed < 0 or self.noise_sigma_accel < 0:
            raise ValueError("dwell and noise levels must be non-negative")


@dataclass
class Trajectory:
    """Sampled kinematics of one passing; ``x``/``y`` are meters from the site center."""

    t_ms: np.ndarray
    x: np.ndarray
    y: np.ndarray
    speed: np.ndarray
    accel: np.ndarray


def kinematic_profile(profile: ProfileSpec, stop: bool, d_in: float, d_out: float):
    """Noise-free (t, path_length, speed, accel) samples along a passing.

    The path is ``d_in`` meters in, then ``d_out`` meters out. With ``stop``
    the vehicle brakes to zero exactly at the center, waits ``dwell_s`` and
    accelerates back to the approach speed.
    """
    v0, dec, acc = profile.approach_speed, profile.decel_rate, profile.accel_rate
    dt = 1.0 / profile.sample_hz
    if not stop:
        total_t = (d_in + d_out) / v0
        t = np.arange(0.0, total_t + 1e-12, dt)
        return t, v0 * t, np.full(len(t), v0), np.zeros(len(t))

    d_brake = v0 * v0 / (2 * dec)
    d_in = max(d_in, d_brake)
    t1 = (d_in - d_brake) / v0          # braking starts
    t2 = t1 + v0 / dec                  # stopped at center
    t3 = t2 + profile.dwell_s           # pulls away
    t4 = t3 + v0 / acc                  # back at cruise
    d_accel = v0 * v0 / (2 * acc)
    s4 = d_in + d_accel
    total_t = t4 + max(d_out - d_accel, 0.0) / v0
    t = np.arange(0.0, total_t + 1e-12, dt)
    s = np.empty_like(t)
    v = np.empty_like(t)
    a = np.empty_like(t)
    ph = np.searchsorted([t1, t2, t3, t4], t, side="right")
    m = ph == 0
    s[m], v[m], a[m] = v0 * t[m], v0, 0.0
    m = ph == 1
    tau = t[m] - t1
    s[m], v[m], a[m] = d_in - d_brake + v0 * tau - 0.5 * dec * tau ** 2, v0 - dec * tau, -dec
    m = ph == 2
    s[m], v[m], a[m] = d_in, 0.0, 0.0
    m = ph == 3
    tau = t[m] - t3
    s[m], v[m], a[m] = d_in + 0.5 * acc * tau ** 2, acc * tau, acc
    m = ph == 4
    tau = t[m] - t4
    s[m], v[m], a[m] = s4 + v0 * tau, v0, 0.0
    return t, s, np.maximum(v, 0.0), a


def _unit(heading_deg):
    h = math.radians(heading_deg)
    return math.sin(h), math.cos(h)


def gen_trajectory(profile: ProfileSpec, headings: Sequence[float], rng: np.random.Generator,
                   reach_m: float = DEFAULT_REACH_FT * FT_TO_M, start_ms: int = 0,
                   stop: bool | None = None, legs: tuple[int, int] | None = None) -> Trajectory:
    if stop is None:
        stop = bool(rng.random() < profile.stop_probability)
    if legs is None:
        i_in = int(rng.integers(len(headings)))
        i_out = int((i_in + 1 + rng.integers(len(headings) - 1)) % len(headings)) if len(headings) > 1 else i_in
    else:
        i_in, i_out = legs
    t, s, v, a = kinematic_profile(profile, stop, reach_m, reach_m)
    d_in = max(reach_m, profile.approach_speed ** 2 / (2 * profile.decel_rate)) if stop else reach_m
    ux_in, uy_in = _unit(headings[i_in])
    ux_out, uy_out = _unit(headings[i_out])
    before = s < d_in
    dist = np.where(before, d_in - s, s - d_in)
    x = np.where(before, ux_in * dist, ux_out * dist)
    y = np.where(before, uy_in * dist, uy_out * dist)
    if profile.noise_sigma_speed > 0:
        v = np.maximum(v + rng.normal(0.0, profile.noise_sigma_speed, len(v)), 0.0)
    if profile.noise_sigma_accel > 0:
        a = np.clip(a + rng.normal(0.0, profile.noise_sigma_accel, len(a)), -MAX_ABS_ACCEL, MAX_ABS_ACCEL)
    t_ms = start_ms + np.round(t * 1000.0).astype(np.int64)
    return Trajectory(t_ms, x, y, v, a)


def gen_passing(profile: ProfileSpec, site: IntersectionSite, device_id: str, start_ms: int = 0,
                rng: np.random.Generator | None = None, **kwargs) -> list[BsmRecord]:
    """One passing through ``site`` as BSM records (seeded by ``profile.rng_seed`` unless ``rng`` is given)."""
    rng = rng if rng is not None else np.random.default_rng(profile.rng_seed)
    headings = site.approach_headings or (0.0, 180.0)
    tr = gen_trajectory(profile, headings, rng, start_ms=start_ms, **kwargs)
    lat, lon = LocalFrame(site.center_lat, site.center_lon).to_geo(tr.x, tr.y)
    return [BsmRecord(device_id, int(t), float(la), float(lo), float(v), float(a))
            for t, la, lo, v, a in zip(tr.t_ms, lat, lon, tr.speed, tr.accel)]


def gen_counts(X, beta_true, sigma_true=None, seed: int = 0) -> np.ndarray:
    """Poisson counts with log-mean X beta; ``sigma_true`` adds normal coefficient heterogeneity."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    beta = np.asarray(beta_true, dtype=float)
    rng = np.random.default_rng(seed)
    if sigma_true is not None:
        sigma = np.asarray(sigma_true, dtype=float)
        b = beta[None, :] + sigma[None, :] * rng.normal(size=X.shape)
        eta = np.sum(X * b, axis=1)
    else:
        eta = X @ beta
    if not np.all(np.isfinite(eta)) or np.any(eta > MAX_ETA):
        raise ConvergenceError("exp(beta X) overflow while generating counts")
    return rng.poisson(np.exp(eta)).astype(np.int64)


# --------------------------------------------------------------- corpus

@dataclass(frozen=True)
class CorpusSpec:
    n_sites: int = 20
    passings_per_site: int = 500
    n_devices: int = 100
    seed: int = 0
    profile: ProfileSpec = ProfileSpec()
    noise_range: tuple[float, float] = (0.05, 0.6)
    beta_true: tuple[float, ...] = (0.6, 0.04, 0.5, 0.3)  # const, aadt_major/1000, signalized, speed noise
    origin: tuple[float, float] = (42.28, -83.74)
    spacing_deg: float = 0.01


SITE_COVARIATES = ("aadt_major_k", "signalized", "site_noise")


def _make_sites(spec: CorpusSpec, rng):
    rows = []
    side = int(math.ceil(math.sqrt(spec.n_sites)))
    for k in range(spec.n_sites):
        lat = spec.origin[0] + (k // side) * spec.spacing_deg
        lon = spec.origin[1] + (k % side) * spec.spacing_deg
        four = bool(rng.random() < 0.4)
        base = float(rng.uniform(0, 90))
        headings = tuple(round((base + 90 * j) % 360, 3) for j in range(4 if four else 3))
        noise = float(rng.uniform(*spec.noise_range))
        rows.append(dict(
            site_id=f"S{k:03d}", center_lat=lat, center_lon=lon, approach_headings=headings,
            aadt_major=float(rng.integers(5000, 40000)), aadt_minor=float(rng.integers(1000, 20000)),
            speed_limit_major=float(rng.choice([25, 30, 35, 40, 45])),
            speed_limit_minor=float(rng.choice([25, 30, 35])),
            signalized=bool(rng.random() < 0.46), four_legged=four,
            lanes_through=int(rng.integers(2, 7)), lanes_left=int(rng.integers(0, 4)),
            lanes_right=int(rng.integers(0, 3)), noise=noise,
        ))
    X = np.column_stack([
        np.ones(spec.n_sites),
        [r["aadt_major"] / 1000 for r in rows],
        [float(r["signalized"]) for r in rows],
        [r["noise"] for r in rows],
    ])
    counts = gen_counts(X, spec.beta_true, seed=spec.seed + 7919)
    sites = []
    for r, c in zip(rows, counts):
        noise = r.pop("noise")
        sites.append((IntersectionSite(crash_avg=float(c), **r), noise))
    return sites


def write_corpus(spec: CorpusSpec, out_dir: str, bsm_name: str = "bsm.csv",
                 site_name: str = "sites.csv") -> dict:
    """Write an ingest-compatible BSM CSV, a site CSV and ground-truth JSON.

    Records are written one passing at a time, so memory does not grow
    with corpus size.
    """
    os.makedirs(out_dir, exist_ok=True)
    layout_rng = np.random.default_rng(spec.seed)
    sites = _make_sites(spec, layout_rng)
    with open(os.path.join(out_dir, site_name), "w", newline="") as fh:
        write_site_inventory([s for s, _ in sites], fh)

    # passing p of site k goes to device (k * passings_per_site + p) % n_devices
    plan: dict[int, list[int]] = {d: [] for d in range(spec.n_devices)}
    for k in range(spec.n_sites):
        for p in range(spec.passings_per_site):
            plan[(k * spec.passings_per_site + p) % spec.n_devices].append(k)

    n_records = 0
    with open(os.path.join(out_dir, bsm_name), "w", newline="") as fh:
        fh.write("device_id,timestamp_ms,latitude,longitude,speed_mps,accel_long_mps2\n")
        for dev in range(spec.n_devices):
            rng = np.random.default_rng(spec.seed ^ (dev + 1))
            clock = 1_349_049_600_000 + int(rng.integers(0, 3_600_000))
            device_id = f"D{dev:04d}"
            for k in plan[dev]:
                site, noise = sites[k]
                prof = ProfileSpec(**{**asdict(spec.profile), "noise_sigma_speed": noise,
                                      "noise_sigma_accel": noise})
                tr = gen_trajectory(prof, site.approach_headings, rng, start_ms=clock)
                lat, lon = LocalFrame(site.center_lat, site.center_lon).to_geo(tr.x, tr.y)
                lines = [f"{device_id},{t},{la!r},{lo!r},{v!r},{a!r}\n"
                         for t, la, lo, v, a in zip(tr.t_ms.tolist(), lat.tolist(), lon.tolist(),
                                                    tr.speed.tolist(), tr.accel.tolist())]
                fh.writelines(lines)
                n_records += len(lines)
                clock = int(tr.t_ms[-1]) + 120_000 + int(rng.integers(0, 600_000))

    truth = {
        "corpus": {k: v for k, v in asdict(spec).items() if k != "profile"},
        "profile": asdict(spec.profile),
        "site_covariates": list(SITE_COVARIATES),
        "beta_true": list(spec.beta_true),
        "sigma_true": None,
        "site_noise": {s.site_id: n for s, n in sites},
        "n_records": n_records,
    }
    with open(os.path.join(out_dir, "ground_truth.json"), "w") as fh:
        json.dump(truth, fh, indent=2, sort_keys=True)
    return truth
