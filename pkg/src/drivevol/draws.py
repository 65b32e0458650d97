"""Deterministic quasi-random draws for simulated likelihoods."""

from __future__ import annotations

import math

import numpy as np

DEFAULT_SKIP = 10

# Acklam's rational approximation to the standard normal quantile
_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
      1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
      6.680131188771972e+01, -1.328068155288572e+01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
      -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
      3.754408661907416e+00)
_P_LOW = 0.02425


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    return all(n % k for k in range(2, int(math.isqrt(n)) + 1))


def primes(count: int) -> list[int]:
    out, k = [], 2
    while len(out) < count:
        if is_prime(k):
            out.append(k)
        k += 1
    return out


def halton(index: int, base: int) -> float:
    """Radical inverse of ``index`` (>= 1) in a prime ``base``."""
    if index < 1:
        raise ValueError("Halton index starts at 1")
    if not is_prime(base):
        raise ValueError(f"Halton base must be prime, got {base}")
    result, f = 0.0, 1.0 / base
    i = index
    while i > 0:
        i, digit = divmod(i, base)
        result += f * digit
        f /= base
    return result


def halton_sequence(n: int, base: int, skip: int = DEFAULT_SKIP) -> np.ndarray:
    """Points ``skip + 1 .. skip + n`` of the Halton sequence in ``base``."""
    if not is_prime(base):
        raise ValueError(f"Halton base must be prime, got {base}")
    idx = np.arange(skip + 1, skip + n + 1, dtype=np.int64)
    result = np.zeros(n)
    f = 1.0 / base
    while np.any(idx > 0):
        idx, digit = np.divmod(idx, base)
        result += f * digit
        f /= base
    return result


def norm_ppf(p):
    """Standard normal quantile, |error| below 1.15e-9 on (0, 1)."""
    p = np.asarray(p, dtype=float)
    out = np.empty_like(p)
    lo = p < _P_LOW
    hi = p > 1 - _P_LOW
    mid = ~(lo | hi)

    q = p[mid] - 0.5
    r = q * q
    out[mid] = ((((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
                / (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1))

    for mask, sign, src in ((lo, 1.0, p), (hi, -1.0, 1 - p)):
        if np.any(mask):
            q = np.sqrt(-2 * np.log(src[mask]))
            out[mask] = sign * ((((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5])
                                / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1))
    if out.ndim == 0:
        return float(out)
    return out


def normal_draws(n_obs: int, n_draws: int, dims: int, skip: int = DEFAULT_SKIP) -> np.ndarray:
    """Standard-normal Halton draws of shape (n_obs, n_draws, dims).

    Dimension ``k`` uses the ``k``-th prime as base; observation ``i`` gets
    the consecutive block of points ``i * n_draws .. (i + 1) * n_draws - 1``.
    """
    out = np.empty((n_obs, n_draws, dims))
    for k, base in enumerate(primes(dims)):
        out[:, :, k] = norm_ppf(halton_sequence(n_obs * n_draws, base, skip)).reshape(n_obs, n_draws)
    return out
