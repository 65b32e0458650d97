"""Level-1 and Level-2 volatility vectors for one intersection.

Names follow ``L<level>-<element>-<measure>``:

* element: Speed, AccDec (all accelerations), Accel (> 0), Decel (< 0),
  Jerk, JerkPos, JerkNeg
* measure: Sdev, Cv, Qcv, Dmean, Vf, %T(1Sdev), %T(2Sdev)

Level 1 pools every record of a site. Level 2 computes each measure per
passing and averages over the passings where it is defined.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import stats
from .segmentation import Passing
from .stats import UNDEFINED

MPS_TO_MPH = 2.236936
DEFAULT_BIN_WIDTH_MPH = 5.0
DEFAULT_MIN_BIN_COUNT = 30
DEFAULT_Z = (1.0, 2.0)
MIN_SITE_RECORDS = 1000
MIN_SITE_PASSINGS = 30

NAME_RE = re.compile(r"L[12]-(Speed|AccDec|Accel|Decel|Jerk|JerkPos|JerkNeg)-(Sdev|Cv|Qcv|Dmean|Vf|%T\([12]Sdev\))")


def _pt(z: float) -> str:
    return f"%T({z:g}Sdev)"


_SPEED_L1 = ["Sdev", "Cv", "Qcv", "Dmean", "%T(1Sdev)", "%T(2Sdev)"]
_ACCEL = ["AccDec-Sdev", "Accel-Cv", "Decel-Cv", "Accel-Qcv", "Decel-Qcv", "AccDec-Dmean",
          "AccDec-%T(1Sdev)", "AccDec-%T(2Sdev)"]
_SPEED_L2 = ["Sdev", "Vf", "Cv", "Qcv", "Dmean", "%T(1Sdev)", "%T(2Sdev)"]
_JERK = ["Jerk-Sdev", "JerkPos-Cv", "JerkNeg-Cv", "JerkPos-Qcv", "JerkNeg-Qcv", "Jerk-Dmean",
         "Jerk-%T(1Sdev)", "Jerk-%T(2Sdev)"]

LEVEL1_NAMES = tuple([f"L1-Speed-{m}" for m in _SPEED_L1] + [f"L1-{m}" for m in _ACCEL])
LEVEL2_NAMES = tuple([f"L2-Speed-{m}" for m in _SPEED_L2] + [f"L2-{m}" for m in _ACCEL]
                     + [f"L2-{m}" for m in _JERK])
MEASURE_NAMES = LEVEL1_NAMES + LEVEL2_NAMES


@dataclass(frozen=True)
class MeasureParams:
    bin_width_mph: float = DEFAULT_BIN_WIDTH_MPH
    min_bin_count: int = DEFAULT_MIN_BIN_COUNT
    v_floor: float = stats.DEFAULT_V_FLOOR
    z: tuple[float, float] = DEFAULT_Z
    min_site_records: int = MIN_SITE_RECORDS
    min_site_passings: int = MIN_SITE_PASSINGS


# ------------------------------------------------------------------ jerk

@dataclass
class JerkSeries:
    values: np.ndarray
    speeds: np.ndarray  # speed at the later record of each pair
    anomalies: int = 0  # pairs skipped for a zero time step


def derive_jerk(passing: Passing | None = None, *, t=None, accel=None, speed=None) -> JerkSeries:
    """Backward difference of acceleration over time, in m/s^3."""
    if passing is not None:
        t, accel, speed = passing.t, passing.accel_long, passing.speed
    t = np.asarray(t, dtype=np.int64)
    a = np.asarray(accel, dtype=float)
    v = np.asarray(speed, dtype=float) if speed is not None else np.zeros(len(a))
    if len(a) < 2:
        raise ValueError("jerk needs at least 2 records")
    dt = np.diff(t) / 1000.0
    ok = dt != 0
    j = np.diff(a)[ok] / dt[ok]
    return JerkSeries(j, v[1:][ok], int(np.count_nonzero(~ok)))


# ------------------------------------------------------------- speed bins

@dataclass(frozen=True)
class SpeedBinTable:
    """Per-speed-bin mean and s_dev of a target quantity (acceleration or jerk).

    Bin ``k`` covers [k * width, (k + 1) * width) mph. Bins with fewer than
    ``min_bin_count`` observations are marked fallback and judged against
    the table-wide band instead.
    """

    bin_width_mph: float
    count: np.ndarray
    mean: np.ndarray
    sdev: np.ndarray
    fallback: np.ndarray
    global_mean: float
    global_sdev: float
    min_bin_count: int

    def __len__(self):
        return len(self.count)

    def bin_index(self, speeds_mps) -> np.ndarray:
        mph = np.asarray(speeds_mps, dtype=float) * MPS_TO_MPH
        return np.floor(mph / self.bin_width_mph).astype(np.int64)

    def band_params(self, speeds_mps) -> tuple[np.ndarray, np.ndarray]:
        """Per-observation (mean, s_dev) used to build the threshold band."""
        idx = self.bin_index(speeds_mps)
        mean = np.full(len(idx), self.global_mean)
        sd = np.full(len(idx), self.global_sdev)
        usable = (idx >= 0) & (idx < len(self.count))
        usable[usable] = ~self.fallback[idx[usable]]
        mean[usable] = self.mean[idx[usable]]
        sd[usable] = self.sdev[idx[usable]]
        return mean, sd

    def rows(self):
        for k in range(len(self.count)):
            yield k, int(self.count[k]), float(self.mean[k]), float(self.sdev[k]), bool(self.fallback[k])


def build_speed_bins(values, speeds, bin_width_mph: float = DEFAULT_BIN_WIDTH_MPH,
                     min_bin_count: int = DEFAULT_MIN_BIN_COUNT) -> SpeedBinTable:
    x = np.asarray(values, dtype=float)
    v = np.asarray(speeds, dtype=float)
    if len(x) != len(v):
        raise ValueError("values and speeds must have equal length")
    if min_bin_count < 2:
        raise ValueError("min_bin_count must be >= 2")
    empty = np.empty(0)
    if len(x) == 0:
        return SpeedBinTable(bin_width_mph, np.empty(0, np.int64), empty, empty, np.empty(0, bool),
                             UNDEFINED, UNDEFINED, min_bin_count)
    idx = np.floor(v * MPS_TO_MPH / bin_width_mph).astype(np.int64)
    if idx.min() < 0:
        raise ValueError("negative speed in bin table input")
    nb = int(idx.max()) + 1
    count = np.bincount(idx, minlength=nb)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.bincount(idx, weights=x, minlength=nb) / count
        dev = x - mean[idx]
        m2 = np.bincount(idx, weights=dev * dev, minlength=nb)
        sdev = np.sqrt(m2 / (count - 1))
    fallback = count < min_bin_count
    mean[count == 0] = np.nan
    sdev[count < 2] = np.nan
    return SpeedBinTable(bin_width_mph, count, mean, sdev, fallback,
                         float(x.mean()), stats.s_dev(x), min_bin_count)


# -------------------------------------------------------------- vectors

@dataclass
class VolatilityVector:
    site_id: str
    values: dict[str, float] = field(default_factory=dict)
    counts: dict[str, int] = field(default_factory=dict)  # observations (L1) or passings (L2) behind each entry
    n_records: int = 0
    n_passings: int = 0

    def __getitem__(self, name: str) -> float:
        return self.values[name]

    def update(self, other: "VolatilityVector") -> None:
        self.values.update(other.values)
        self.counts.update(other.counts)
        self.n_records = max(self.n_records, other.n_records)
        self.n_passings = max(self.n_passings, other.n_passings)

    def undefined(self) -> list[str]:
        return [k for k in MEASURE_NAMES if math.isnan(self.values.get(k, math.nan))]

    def qualifies(self, params: MeasureParams = MeasureParams()) -> bool:
        return self.n_records >= params.min_site_records and self.n_passings >= params.min_site_passings


def _subsets(x: np.ndarray):
    return x[x > 0], x[x < 0]


def _accel_block(prefix: str, a: np.ndarray, spd: np.ndarray, table: SpeedBinTable | None,
                 z: Sequence[float]) -> dict[str, float]:
    pos, neg = _subsets(a)
    out = {
        f"{prefix}-AccDec-Sdev": stats.s_dev(a),
        f"{prefix}-Accel-Cv": stats.coeff_var(pos),
        f"{prefix}-Decel-Cv": stats.coeff_var(neg),
        f"{prefix}-Accel-Qcv": stats.quartile_cv(pos),
        f"{prefix}-Decel-Qcv": stats.quartile_cv(neg),
        f"{prefix}-AccDec-Dmean": stats.mean_abs_dev(a),
    }
    for zz in z:
        out[f"{prefix}-AccDec-{_pt(zz)}"] = stats.pct_extreme(a, zz, bins=table, speeds=spd if table else None)
    return out


def _speed_block(prefix: str, v: np.ndarray, z: Sequence[float], v_floor: float | None) -> dict[str, float]:
    out = {f"{prefix}-Speed-Sdev": stats.s_dev(v)}
    if v_floor is not None:
        out[f"{prefix}-Speed-Vf"] = stats.stochastic_vol(v, v_floor)
    out.update({
        f"{prefix}-Speed-Cv": stats.coeff_var(v),
        f"{prefix}-Speed-Qcv": stats.quartile_cv(v),
        f"{prefix}-Speed-Dmean": stats.mean_abs_dev(v),
    })
    for zz in z:
        out[f"{prefix}-Speed-{_pt(zz)}"] = stats.pct_extreme(v, zz)
    return out


def _jerk_block(j: np.ndarray, spd: np.ndarray, table: SpeedBinTable | None, z: Sequence[float]) -> dict[str, float]:
    pos, neg = _subsets(j)
    out = {
        "L2-Jerk-Sdev": stats.s_dev(j),
        "L2-JerkPos-Cv": stats.coeff_var(pos),
        "L2-JerkNeg-Cv": stats.coeff_var(neg),
        "L2-JerkPos-Qcv": stats.quartile_cv(pos),
        "L2-JerkNeg-Qcv": stats.quartile_cv(neg),
        "L2-Jerk-Dmean": stats.mean_abs_dev(j),
    }
    for zz in z:
        out[f"L2-Jerk-{_pt(zz)}"] = stats.pct_extreme(j, zz, bins=table, speeds=spd if table else None)
    return out


def _check_z(z):
    if tuple(z) != DEFAULT_Z:
        # the 37-slot vector has exactly the 1- and 2-Sdev bands
        raise ValueError("z must be (1, 2)")


def level1_vector(site_id: str, speed, accel, params: MeasureParams = MeasureParams(),
                  accel_table: SpeedBinTable | None = None) -> VolatilityVector:
    """14 Level-1 entries from a site's pooled speed and acceleration samples."""
    _check_z(params.z)
    v = np.asarray(speed, dtype=float)
    a = np.asarray(accel, dtype=float)
    if accel_table is None:
        accel_table = build_speed_bins(a, v, params.bin_width_mph, params.min_bin_count)
    values = _speed_block("L1", v, params.z, None)
    values.update(_accel_block("L1", a, v, accel_table, params.z))
    pos, neg = _subsets(a)
    counts = {}
    for name in LEVEL1_NAMES:
        element = name.split("-")[1]
        counts[name] = {"Accel": len(pos), "Decel": len(neg)}.get(element, len(v))
    return VolatilityVector(site_id, {k: values[k] for k in LEVEL1_NAMES}, counts, n_records=len(v))


def passing_measures(p: Passing, accel_table: SpeedBinTable | None, jerk_table: SpeedBinTable | None,
                     params: MeasureParams = MeasureParams()) -> dict[str, float]:
    """The 23 Level-2 measures of a single passing."""
    values = _speed_block("L2", p.speed, params.z, params.v_floor)
    values.update(_accel_block("L2", p.accel_long, p.speed, accel_table, params.z))
    if len(p.t) >= 2:
        jerk = derive_jerk(p)
        values.update(_jerk_block(jerk.values, jerk.speeds, jerk_table, params.z))
    else:
        values.update({n: UNDEFINED for n in LEVEL2_NAMES if "-Jerk" in n})
    return values


def site_tables(passings: Sequence[Passing], params: MeasureParams = MeasureParams()):
    """Site-level acceleration and jerk speed-bin tables pooled over passings."""
    if not passings:
        return build_speed_bins([], [], params.bin_width_mph, params.min_bin_count), \
            build_speed_bins([], [], params.bin_width_mph, params.min_bin_count)
    spd = np.concatenate([p.speed for p in passings])
    acc = np.concatenate([p.accel_long for p in passings])
    jerks = [derive_jerk(p) for p in passings if len(p.t) >= 2]
    jv = np.concatenate([j.values for j in jerks]) if jerks else np.empty(0)
    js = np.concatenate([j.speeds for j in jerks]) if jerks else np.empty(0)
    return (build_speed_bins(acc, spd, params.bin_width_mph, params.min_bin_count),
            build_speed_bins(jv, js, params.bin_width_mph, params.min_bin_count))


def level2_vector(site_id: str, passings: Sequence[Passing], params: MeasureParams = MeasureParams(),
                  accel_table: SpeedBinTable | None = None,
                  jerk_table: SpeedBinTable | None = None,
                  per_passing: list | None = None) -> VolatilityVector:
    """23 Level-2 entries: per-passing measures averaged over passings where defined.

    If ``per_passing`` is a list, each passing's raw measure dict is appended to it.
    """
    _check_z(params.z)
    if accel_table is None or jerk_table is None:
        a_tab, j_tab = site_tables(passings, params)
        accel_table = accel_table or a_tab
        jerk_table = jerk_table or j_tab
    table = np.full((len(passings), len(LEVEL2_NAMES)), np.nan)
    for i, p in enumerate(passings):
        m = passing_measures(p, accel_table, jerk_table, params)
        table[i] = [m[n] for n in LEVEL2_NAMES]
        if per_passing is not None:
            per_passing.append(m)
    defined = ~np.isnan(table)
    n_def = defined.sum(axis=0)
    with np.errstate(invalid="ignore"):
        means = np.where(n_def > 0, np.nansum(table, axis=0) / np.maximum(n_def, 1), np.nan)
    values = {n: float(means[k]) for k, n in enumerate(LEVEL2_NAMES)}
    counts = {n: int(n_def[k]) for k, n in enumerate(LEVEL2_NAMES)}
    return VolatilityVector(site_id, values, counts,
                            n_records=int(sum(len(p.t) for p in passings)), n_passings=len(passings))


def site_vector(site_id: str, speed, accel, passings: Sequence[Passing],
                params: MeasureParams = MeasureParams()) -> VolatilityVector:
    """Full 37-entry vector: Level 1 over all site records, Level 2 over passings."""
    vec = level1_vector(site_id, speed, accel, params)
    l2 = level2_vector(site_id, passings, params)
    vec.values.update(l2.values)
    vec.counts.update(l2.counts)
    vec.n_passings = l2.n_passings
    vec.values = {n: vec.values[n] for n in MEASURE_NAMES}
    return vec
