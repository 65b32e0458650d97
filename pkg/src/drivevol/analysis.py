"""Screening and diagnostics around the crash models: correlations, VIF, hotspots."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from .measures import MEASURE_NAMES, NAME_RE, VolatilityVector
from .models import INTERCEPT, DesignMatrix, FitResult, expected_counts


@dataclass(frozen=True)
class CorrelationEntry:
    name: str
    r: float
    n: int
    defined: bool = True

    @property
    def sign(self) -> int:
        return 0 if not self.defined or self.r == 0 else (1 if self.r > 0 else -1)


def pearson(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        return math.nan
    return float(np.clip((dx @ dy) / math.sqrt(sxx * syy), -1.0, 1.0))


def _columns(vectors) -> dict[str, np.ndarray]:
    if isinstance(vectors, Mapping):
        return {k: np.asarray(v, dtype=float) for k, v in vectors.items()}
    return {n: np.array([v.values.get(n, math.nan) for v in vectors]) for n in MEASURE_NAMES}


def correlation_rank(vectors: Sequence[VolatilityVector] | Mapping[str, Sequence[float]], crashes,
                     method: str = "pearson", min_sites: int = 3) -> list[CorrelationEntry]:
    """Pairwise-complete correlation of each measure with crashes, sorted by r descending.

    Measures with fewer than ``min_sites`` usable sites or zero variance are
    kept with ``defined=False`` and listed last.
    """
    if method not in ("pearson", "spearman"):
        raise ValueError(f"unknown correlation method {method!r}")
    y = np.asarray(crashes, dtype=float)
    out = []
    for name, x in _columns(vectors).items():
        ok = np.isfinite(x) & np.isfinite(y)
        n = int(ok.sum())
        r = math.nan
        if n >= min_sites:
            xs, ys = x[ok], y[ok]
            if method == "spearman":
                xs, ys = rankdata(xs), rankdata(ys)
            r = pearson(xs, ys)
        out.append(CorrelationEntry(name, r, n, not math.isnan(r)))
    defined = sorted((e for e in out if e.defined), key=lambda e: -e.r)
    return defined + [e for e in out if not e.defined]


@dataclass(frozen=True)
class VifEntry:
    name: str
    vif: float
    flagged: bool


def vif_screen(data: DesignMatrix, threshold: float = 5.0) -> list[VifEntry]:
    """VIF of each non-intercept column regressed (with intercept) on the other columns."""
    names = [n for n in data.names if n != INTERCEPT]
    X = np.column_stack([data.column(n) for n in names]) if names else np.empty((data.n, 0))
    k = len(names)
    if data.n < k + 2:
        raise ValueError(f"VIF needs at least {k + 2} rows for {k} covariates")
    out = []
    for j, name in enumerate(names):
        target = X[:, j]
        others = np.column_stack([np.ones(data.n)] + [X[:, i] for i in range(k) if i != j])
        coef, *_ = np.linalg.lstsq(others, target, rcond=None)
        resid = target - others @ coef
        sst = float(np.sum((target - target.mean()) ** 2))
        ssr = float(resid @ resid)
        if sst == 0.0 or ssr <= 1e-12 * sst:
            vif = math.inf
        else:
            vif = max(1.0, sst / ssr)
        out.append(VifEntry(name, vif, vif > threshold))
    return out


@dataclass
class ExpectedActual:
    row_ids: list[str]
    actual: np.ndarray
    expected: np.ndarray
    mae: float
    rmse: float


def expected_vs_actual(fit: FitResult, data: DesignMatrix) -> ExpectedActual:
    lam = expected_counts(fit, data)
    y = np.asarray(data.y, dtype=float)
    err = y - lam
    ids = data.row_ids or [str(i) for i in range(data.n)]
    return ExpectedActual(list(ids), y, lam, float(np.mean(np.abs(err))), float(np.sqrt(np.mean(err ** 2))))


def percentile_ranks(values) -> np.ndarray:
    """Average-rank percentiles in [0, 100]; ties share a rank, NaN stays NaN."""
    x = np.asarray(values, dtype=float)
    out = np.full(len(x), np.nan)
    ok = np.isfinite(x)
    n = int(ok.sum())
    if n == 1:
        out[ok] = 50.0
    elif n > 1:
        out[ok] = 100.0 * (rankdata(x[ok]) - 1) / (n - 1)
    return out


@dataclass
class HotspotRow:
    site_id: str
    crash_avg: float
    expected: float
    crash_percentile: float
    percentiles: dict[str, float] = field(default_factory=dict)
    flagged: bool = False
    flagged_by: list[str] = field(default_factory=list)


def significant_measures(fit: FitResult, alpha: float = 0.05) -> list[str]:
    return [n for n in fit.names if NAME_RE.fullmatch(n) and fit.p_values.get(n, 1.0) < alpha]


def hotspot_report(vectors: Sequence[VolatilityVector], crashes, fit: FitResult | None = None,
                   data: DesignMatrix | None = None, measures: Sequence[str] | None = None,
                   volatility_pct: float = 75.0, crash_pct: float = 50.0) -> list[HotspotRow]:
    """Flag sites in the top volatility quartile of a screened measure but the bottom half of crashes.

    Screened measures: ``measures`` if given, else the significant measures of ``fit``.
    """
    if measures is None:
        measures = significant_measures(fit) if fit is not None else []
    crashes = np.asarray(crashes, dtype=float)
    crash_p = percentile_ranks(crashes)
    expected = np.full(len(vectors), np.nan)
    if fit is not None and data is not None:
        expected = expected_counts(fit, data)
    pct = {m: percentile_ranks([v.values.get(m, math.nan) for v in vectors]) for m in measures}
    rows = []
    for i, v in enumerate(vectors):
        by = [m for m in measures if pct[m][i] >= volatility_pct and crash_p[i] <= crash_pct
              and not _degenerate(pct[m])]
        rows.append(HotspotRow(v.site_id, float(crashes[i]), float(expected[i]), float(crash_p[i]),
                               {m: float(pct[m][i]) for m in measures}, bool(by), by))
    return rows


def _degenerate(p: np.ndarray) -> bool:
    ok = p[np.isfinite(p)]
    return len(ok) == 0 or np.all(ok == ok[0])
