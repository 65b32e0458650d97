"""Independent pure-Python reference implementations used as test oracles."""

import math

NAN = float("nan")


def mean(xs):
    return math.fsum(xs) / len(xs)


def sdev(xs):
    if len(xs) < 2:
        return NAN
    m = mean(xs)
    return math.sqrt(math.fsum((x - m) ** 2 for x in xs) / (len(xs) - 1))


def cv(xs, eps=1e-9):
    if len(xs) < 2 or abs(mean(xs)) <= eps:
        return NAN
    return 100.0 * sdev(xs) / abs(mean(xs))


def dmean(xs):
    if not xs:
        return NAN
    m = mean(xs)
    return math.fsum(abs(x - m) for x in xs) / len(xs)


def quantile(xs, p):
    s = sorted(xs)
    h = (len(s) - 1) * p
    lo = int(math.floor(h))
    hi = min(lo + 1, len(s) - 1)
    return s[lo] + (h - lo) * (s[hi] - s[lo])


def qcv(xs):
    if len(xs) < 4:
        return NAN
    q1, q3 = quantile(xs, 0.25), quantile(xs, 0.75)
    if q1 + q3 == 0:
        return NAN
    return 100.0 * (q3 - q1) / abs(q3 + q1)


def pct_t(xs, z):
    if len(xs) < 2:
        return NAN
    m, s = mean(xs), sdev(xs)
    return 100.0 * sum(1 for x in xs if abs(x - m) > z * s) / len(xs)


def pct_t_binned(xs, speeds, z, width_mph=5.0, min_count=30, mps_to_mph=2.236936):
    bins = {}
    for x, v in zip(xs, speeds):
        bins.setdefault(int(math.floor(v * mps_to_mph / width_mph)), []).append(x)
    gm, gs = mean(xs), sdev(xs)
    band = {k: (mean(g), sdev(g)) if len(g) >= min_count else (gm, gs) for k, g in bins.items()}
    out = 0
    for x, v in zip(xs, speeds):
        m, s = band[int(math.floor(v * mps_to_mph / width_mph))]
        out += abs(x - m) > z * s
    return 100.0 * out / len(xs)


def vf(xs, floor=0.1):
    r = [100.0 * math.log(b / a) for a, b in zip(xs, xs[1:]) if a > floor and b > floor]
    if len(r) < 2:
        return NAN
    return sdev(r)


def rel_close(a, b, tol):
    if math.isnan(a) or math.isnan(b):
        return math.isnan(a) and math.isnan(b)
    return abs(a - b) <= tol * max(abs(a), abs(b), 1e-300) or a == b
