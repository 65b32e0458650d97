"""Dispersion functionals used as driving-volatility measures.

Every functional takes a 1-D array-like and returns a float. When a value
cannot be computed (too few points, zero denominator) the result is NaN,
which is the package-wide "undefined" marker.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

UNDEFINED = math.nan
CV_EPS = 1e-9
DEFAULT_V_FLOOR = 0.1


def is_undefined(value) -> bool:
    return value is None or (isinstance(value, float) and math.isnan(value))


def _arr(values) -> np.ndarray:
    return np.asarray(values, dtype=float).ravel()


def s_dev(values) -> float:
    """Sample standard deviation (n - 1 denominator)."""
    x = _arr(values)
    if len(x) < 2:
        return UNDEFINED
    d = x - x.mean()
    return math.sqrt(float(np.dot(d, d)) / (len(x) - 1))


def coeff_var(values, eps: float = CV_EPS) -> float:
    """100 * s_dev / |mean|, in percent."""
    x = _arr(values)
    if len(x) < 2:
        return UNDEFINED
    m = abs(float(x.mean()))
    if m <= eps:
        return UNDEFINED
    return 100.0 * s_dev(x) / m


def mean_abs_dev(values) -> float:
    x = _arr(values)
    if len(x) < 1:
        return UNDEFINED
    return float(np.abs(x - x.mean()).mean())


def quantile(values, p: float) -> float:
    """Linear-interpolation quantile at position h = (n - 1) p of the sorted values."""
    x = np.sort(_arr(values))
    if len(x) == 0:
        return UNDEFINED
    h = (len(x) - 1) * p
    lo = math.floor(h)
    hi = min(lo + 1, len(x) - 1)
    return float(x[lo] + (h - lo) * (x[hi] - x[lo]))


def quartile_cv(values) -> float:
    """100 * (Q3 - Q1) / |Q3 + Q1|, in percent.

    The absolute value keeps the measure non-negative for all-negative
    series (decelerations, negative jerk).
    """
    x = np.sort(_arr(values))
    if len(x) < 4:
        return UNDEFINED
    q1, q3 = quantile(x, 0.25), quantile(x, 0.75)
    denom = abs(q3 + q1)
    if denom == 0.0 or denom <= 1e-12 * max(abs(q1), abs(q3)):
        return UNDEFINED
    return 100.0 * (q3 - q1) / denom


def pct_extreme(values, z: float, bins=None, speeds=None) -> float:
    """Percent of observations strictly outside mean +/- z * s_dev.

    Without ``bins`` the band comes from the series itself. With a
    :class:`~drivevol.measures.SpeedBinTable`, each observation is judged
    against the band of the speed bin of its paired speed.
    """
    x = _arr(values)
    n = len(x)
    if n < 2:
        return UNDEFINED
    if bins is None:
        mean, sd = float(x.mean()), s_dev(x)
        outside = np.abs(x - mean) > z * sd
    else:
        if speeds is None or len(speeds) != n:
            raise ValueError("binned pct_extreme needs paired speeds of equal length")
        mean, sd = bins.band_params(np.asarray(speeds, dtype=float))
        outside = np.abs(x - mean) > z * sd
    return 100.0 * float(np.count_nonzero(outside)) / n


def log_returns(speeds, v_floor: float = DEFAULT_V_FLOOR) -> np.ndarray:
    """100 * ln(x_i / x_{i-1}) for consecutive pairs with both values above ``v_floor``."""
    x = _arr(speeds)
    if len(x) < 2:
        return np.empty(0)
    prev, cur = x[:-1], x[1:]
    ok = (prev > v_floor) & (cur > v_floor)
    return 100.0 * np.log(cur[ok] / prev[ok])


def stochastic_vol(speeds, v_floor: float = DEFAULT_V_FLOOR) -> float:
    """Sample s_dev of percent log-returns of a positive time series."""
    r = log_returns(speeds, v_floor)
    if len(r) < 2:
        return UNDEFINED
    return s_dev(r)


@dataclass
class Moments:
    """Count, mean and sum of squared deviations; mergeable (Chan et al.)."""

    n: int = 0
    mean: float = 0.0
    m2: float = 0.0

    @classmethod
    def of(cls, values) -> "Moments":
        x = _arr(values)
        if len(x) == 0:
            return cls()
        mu = float(x.mean())
        d = x - mu
        return cls(len(x), mu, float(np.dot(d, d)))

    def merge(self, other: "Moments") -> "Moments":
        if other.n == 0:
            return Moments(self.n, self.mean, self.m2)
        if self.n == 0:
            return Moments(other.n, other.mean, other.m2)
        n = self.n + other.n
        delta = other.mean - self.mean
        mean = self.mean + delta * other.n / n
        m2 = self.m2 + other.m2 + delta * delta * self.n * other.n / n
        return Moments(n, mean, m2)

    @property
    def s_dev(self) -> float:
        if self.n < 2:
            return UNDEFINED
        return math.sqrt(self.m2 / (self.n - 1))


def merged_moments(parts: Iterable[Moments]) -> Moments:
    """Pairwise-tree reduction in input order, so the result is independent of scheduling."""
    level = list(parts)
    if not level:
        return Moments()
    while len(level) > 1:
        nxt = [level[i].merge(level[i + 1]) for i in range(0, len(level) - 1, 2)]
        if len(level) % 2:
            nxt.append(level[-1])
        level = nxt
    return level[0]


def chunked_s_dev(values, chunk: int = 65_536) -> float:
    x = _arr(values)
    return merged_moments(Moments.of(x[i:i + chunk]) for i in range(0, len(x), chunk)).s_dev
