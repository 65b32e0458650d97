"""Crash-frequency count models fitted by maximum likelihood.

Three families share one result type:

* ``poisson``: log-linear Poisson, Newton-Raphson on the exact Hessian.
* ``negbin``: NB2 (variance mu + alpha mu^2), quasi-Newton with alpha >= 0.
* ``random_poisson``: Poisson with normally distributed coefficients on a
  subset of covariates, estimated by simulated maximum likelihood over
  Halton draws.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy import optimize
from scipy.special import gammaln
from scipy.stats import chi2, norm

from .draws import DEFAULT_SKIP, normal_draws
from .errors import ConvergenceError, DataError

POISSON = "poisson"
NEGBIN = "negbin"
RANDOM_POISSON = "random_poisson"
FAMILIES = (POISSON, NEGBIN, RANDOM_POISSON)
INTERCEPT = "const"
MAX_ETA = 700.0
SEPARATION_MU = 1e-8


@dataclass
class DesignMatrix:
    X: np.ndarray
    names: list[str]
    y: np.ndarray
    row_ids: list[str] | None = None

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.y = np.asarray(self.y)
        self.names = list(self.names)
        if self.X.shape[1] != len(self.names):
            raise DataError("column count does not match names")
        if len(set(self.names)) != len(self.names):
            raise DataError(f"duplicate column names: {self.names}")
        if self.X.shape[0] != len(self.y):
            raise DataError("X and y have different row counts")
        if not np.all(np.isfinite(self.X)):
            raise DataError("design matrix has undefined cells")
        y = np.asarray(self.y, dtype=float)
        if np.any(y < 0) or np.any(y != np.floor(y)):
            raise DataError("response must be non-negative integers")
        self.y = y.astype(np.int64)

    @classmethod
    def build(cls, columns: dict[str, Sequence[float]], y, intercept: bool = True,
              row_ids: Sequence[str] | None = None) -> "DesignMatrix":
        names = list(columns)
        X = np.column_stack([np.asarray(columns[n], dtype=float) for n in names]) if names \
            else np.empty((len(y), 0))
        if intercept and INTERCEPT not in names:
            X = np.column_stack([np.ones(len(y)), X])
            names = [INTERCEPT] + names
        return cls(X, names, y, list(row_ids) if row_ids is not None else None)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.X[:, self.names.index(name)]

    def select(self, names: Sequence[str]) -> "DesignMatrix":
        missing = [c for c in names if c not in self.names]
        if missing:
            raise DataError(f"unknown covariates: {missing}")
        idx = [self.names.index(c) for c in names]
        return DesignMatrix(self.X[:, idx], list(names), self.y, self.row_ids)


def round_counts(values) -> np.ndarray:
    """Nearest integer with halves rounded up (5-year averages to counts)."""
    return np.floor(np.asarray(values, dtype=float) + 0.5).astype(np.int64)


@dataclass
class ModelSpec:
    family: str = POISSON
    covariates: list[str] = field(default_factory=list)
    random_covariates: list[str] = field(default_factory=list)
    n_draws: int = 200
    halton_skip: int = DEFAULT_SKIP
    intercept: bool = True
    max_iter: int = 200
    gtol: float = 1e-8

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        cov = self.column_names()
        extra = [c for c in self.random_covariates if c not in cov]
        if extra:
            raise ValueError(f"random covariates not among covariates: {extra}")
        if self.family == RANDOM_POISSON:
            if not self.random_covariates:
                raise ValueError("random_poisson needs at least one random covariate")
            if self.n_draws < 50:
                raise ValueError("random_poisson needs n_draws >= 50")

    def column_names(self) -> list[str]:
        cols = list(self.covariates)
        if self.intercept and INTERCEPT not in cols:
            cols = [INTERCEPT] + cols
        return cols


@dataclass
class FitResult:
    family: str
    names: list[str]
    beta: dict[str, float]
    se: dict[str, float]
    z_values: dict[str, float]
    p_values: dict[str, float]
    sigma: dict[str, float] = field(default_factory=dict)
    sigma_se: dict[str, float] = field(default_factory=dict)
    sigma_z: dict[str, float] = field(default_factory=dict)
    alpha: float | None = None
    alpha_se: float | None = None
    alpha_z: float | None = None
    ll_zero: float = math.nan
    ll_converged: float = math.nan
    aic: float = math.nan
    mcfadden: float = math.nan
    k: int = 0
    n_obs: int = 0
    marginal_effects: dict[str, float] = field(default_factory=dict)
    iterations: int = 0
    grad_norm: float = math.nan
    converged: bool = False
    n_draws: int = 0
    halton_skip: int = DEFAULT_SKIP

    @property
    def beta_vector(self) -> np.ndarray:
        return np.array([self.beta[n] for n in self.names])

    @property
    def random_names(self) -> list[str]:
        return list(self.sigma)

    @property
    def sigma_vector(self) -> np.ndarray:
        return np.array([self.sigma[n] for n in self.random_names])

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(_jsonable(self.to_dict()), indent=2, sort_keys=True, allow_nan=True)

    @classmethod
    def from_dict(cls, d: dict) -> "FitResult":
        return cls(**d)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


# ------------------------------------------------------------ likelihoods

def _eta(X, beta):
    eta = X @ beta
    if np.any(eta > MAX_ETA):
        raise ConvergenceError("exp(beta X) overflow", {"max_eta": float(eta.max())})
    return eta


def _poisson_terms(eta, y, lgy):
    return y * eta - np.exp(eta) - lgy


def poisson_loglike(beta, X, y) -> float:
    y = np.asarray(y, dtype=float)
    return float(np.sum(_poisson_terms(_eta(X, np.asarray(beta, dtype=float)), y, gammaln(y + 1))))


def poisson_score(beta, X, y) -> np.ndarray:
    return X.T @ (np.asarray(y, dtype=float) - np.exp(_eta(X, np.asarray(beta, dtype=float))))


def nb_loglike(beta, alpha, X, y, grad: bool = False):
    """NB2 log-likelihood; alpha = 0 reduces exactly to the Poisson form.

    lnG(y + 1/a) - lnG(1/a) is expanded as sum_{k<y} ln(1/a + k) so the
    expression stays stable as alpha -> 0.
    """
    y = np.asarray(y, dtype=np.int64)
    yf = y.astype(float)
    eta = _eta(X, np.asarray(beta, dtype=float))
    mu = np.exp(eta)
    k = np.arange(int(y.max()) if len(y) else 0, dtype=float)
    mask = k[None, :] < yf[:, None]
    am = alpha * mu
    if alpha == 0.0:
        l1p_over_a = mu
    else:
        l1p_over_a = np.log1p(am) / alpha
    ll = (np.where(mask, np.log1p(alpha * k)[None, :], 0.0).sum(axis=1)
          + yf * eta - yf * np.log1p(am) - l1p_over_a - gammaln(yf + 1))
    total = float(np.sum(ll))
    if not grad:
        return total
    g_beta = X.T @ ((yf - mu) / (1.0 + am))
    dk = np.where(mask, (k / (1.0 + alpha * k))[None, :], 0.0).sum(axis=1)
    small = np.abs(am) < 1e-4
    with np.errstate(divide="ignore", invalid="ignore"):
        exact = (np.log1p(am) - am / (1.0 + am)) / (alpha * alpha)
    series = mu * mu * (0.5 - 2.0 * am / 3.0 + 0.75 * am * am)
    d_last = np.where(small, series, exact)
    g_alpha = float(np.sum(dk - yf * mu / (1.0 + am) + d_last))
    return total, np.append(g_beta, g_alpha)


class _Simulator:
    """Simulated log-likelihood of the random-parameter Poisson model."""

    def __init__(self, X, y, random_idx, n_draws, skip):
        self.X = X
        self.y = np.asarray(y, dtype=float)
        self.lgy = gammaln(self.y + 1)
        self.random_idx = list(random_idx)
        self.Xr = X[:, self.random_idx]
        self.Z = normal_draws(X.shape[0], n_draws, len(self.random_idx), skip)
        self.ZX = self.Z * self.Xr[:, None, :]  # (n, R, q)

    def eta(self, beta, sigma):
        eta0 = _eta(self.X, beta)
        eta = eta0[:, None] + self.ZX @ sigma
        if np.any(eta > MAX_ETA):
            raise ConvergenceError("exp(beta X) overflow in simulation")
        return eta

    def loglike(self, beta, sigma, grad: bool = False):
        eta = self.eta(beta, sigma)
        terms = _poisson_terms(eta, self.y[:, None], self.lgy[:, None])
        m = terms.max(axis=1)
        e = np.exp(terms - m[:, None])
        s = e.mean(axis=1)
        ll = float(np.sum(m + np.log(s)))
        if not grad:
            return ll
        w = e / e.sum(axis=1, keepdims=True)
        resid = w * (self.y[:, None] - np.exp(eta))  # (n, R)
        g_beta = self.X.T @ resid.sum(axis=1)
        g_sigma = np.einsum("nr,nrq->q", resid, self.ZX)
        return ll, np.concatenate([g_beta, g_sigma])

    def expected(self, beta, sigma):
        return np.exp(self.eta(beta, sigma)).mean(axis=1)


# ------------------------------------------------------------- fitting

def fit_metrics(ll_zero: float, ll_converged: float, k: int) -> tuple[float, float]:
    """(AIC, McFadden rho^2) from the two log-likelihoods and k parameters."""
    if ll_zero == 0:
        raise ValueError("log-likelihood at zero must be non-zero")
    return 2.0 * k - 2.0 * ll_converged, 1.0 - ll_converged / ll_zero


def intercept_only_loglike(y) -> float:
    y = np.asarray(y, dtype=float)
    ybar = y.mean()
    if ybar <= 0:
        raise DataError("all counts are zero; intercept-only model undefined")
    return float(np.sum(y * math.log(ybar) - ybar - gammaln(y + 1)))


def _prepare(data: DesignMatrix, spec: ModelSpec) -> DesignMatrix:
    if data.n == 0 or not np.any(data.y > 0):
        raise DataError("all counts are zero; count models are undefined")
    if spec.intercept and INTERCEPT not in data.names:
        data = DesignMatrix.build({n: data.column(n) for n in data.names}, data.y, True, data.row_ids)
    if spec.covariates:
        cols = spec.column_names()
    else:
        cols = ([INTERCEPT] if spec.intercept else []) + [n for n in data.names if n != INTERCEPT]
    return data.select(cols)


def _numeric_hessian(grad_fn, theta, rel_step=1e-5):
    p = len(theta)
    H = np.empty((p, p))
    for j in range(p):
        h = rel_step * max(1.0, abs(theta[j]))
        tp, tm = theta.copy(), theta.copy()
        tp[j] += h
        tm[j] -= h
        H[:, j] = (grad_fn(tp) - grad_fn(tm)) / (2 * h)
    return 0.5 * (H + H.T)


def _covariance(neg_hessian, diagnostics):
    try:
        cov = np.linalg.inv(neg_hessian)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError("singular information matrix", diagnostics) from exc
    return cov


def _stats(values, cov_diag):
    se = np.sqrt(np.where(cov_diag > 0, cov_diag, np.nan))
    z = values / se
    p = 2 * norm.sf(np.abs(z))
    return se, z, p


def _newton_poisson(X, y, max_iter, gtol):
    y = np.asarray(y, dtype=float)
    beta = np.zeros(X.shape[1])
    const = [j for j in range(X.shape[1]) if np.all(X[:, j] == 1.0)]
    if const and y.mean() > 0:
        beta[const[0]] = math.log(y.mean())
    ll = poisson_loglike(beta, X, y)
    g = poisson_score(beta, X, y)
    for it in range(1, max_iter + 1):
        mu = np.exp(X @ beta)
        info = X.T @ (X * mu[:, None])
        try:
            step = np.linalg.solve(info, g)
        except np.linalg.LinAlgError as exc:
            raise ConvergenceError("singular Hessian (collinear covariates?)", {"iteration": it}) from exc
        decrement = float(g @ step)
        t = 1.0
        while True:
            cand = beta + t * step
            try:
                ll_c = poisson_loglike(cand, X, y)
            except ConvergenceError:
                ll_c = -math.inf
            if ll_c >= ll - 1e-12 * abs(ll) or t < 1e-10:
                break
            t *= 0.5
        if t < 1e-10:
            raise ConvergenceError("line search failed", {"iteration": it, "grad_norm": float(np.abs(g).max())})
        beta, ll = cand, ll_c
        g = poisson_score(beta, X, y)
        gnorm = float(np.abs(g).max())
        if gnorm < gtol or decrement < 1e-20:
            mu = np.exp(X @ beta)
            if mu.min() < SEPARATION_MU:
                # a fitted mean collapsing to zero means the MLE is at infinity
                raise ConvergenceError("separation: some fitted means collapse to zero",
                                       {"iterations": it, "min_mu": float(mu.min()), "grad_norm": gnorm})
            return beta, ll, X.T @ (X * mu[:, None]), it, gnorm
    raise ConvergenceError("Newton iterations exhausted", {"iterations": max_iter, "grad_norm": gnorm})


def _finish(result: FitResult, data: DesignMatrix) -> FitResult:
    result.ll_zero = intercept_only_loglike(data.y)
    result.k = len(result.beta) + len(result.sigma) + (1 if result.family == NEGBIN else 0)
    result.aic, result.mcfadden = fit_metrics(result.ll_zero, result.ll_converged, result.k)
    result.n_obs = data.n
    result.marginal_effects = marginal_effects(result, data)
    return result


def fit_poisson(data: DesignMatrix, spec: ModelSpec | None = None) -> FitResult:
    spec = spec or ModelSpec()
    data = _prepare(data, spec)
    beta, ll, info, it, gnorm = _newton_poisson(data.X, data.y, spec.max_iter, spec.gtol)
    cov = _covariance(info, {"iterations": it})
    se, z, p = _stats(beta, np.diag(cov))
    names = data.names
    res = FitResult(
        family=POISSON, names=names,
        beta=dict(zip(names, beta.tolist())), se=dict(zip(names, se.tolist())),
        z_values=dict(zip(names, z.tolist())), p_values=dict(zip(names, p.tolist())),
        ll_converged=ll, iterations=it, grad_norm=gnorm, converged=True,
    )
    return _finish(res, data)


def _quasi_newton(fun, theta0, bounds, max_iter, what):
    res = optimize.minimize(fun, theta0, jac=True, method="L-BFGS-B", bounds=bounds,
                            options={"maxiter": max_iter * 10, "maxfun": max_iter * 20,
                                     "ftol": 1e-15, "gtol": 1e-7, "maxcor": 30})
    _, g = fun(res.x)
    # projected gradient: components pinned at a bound do not count
    proj = g.copy()
    for j, (lo, hi) in enumerate(bounds):
        if lo is not None and res.x[j] <= lo and g[j] > 0:
            proj[j] = 0.0
        if hi is not None and res.x[j] >= hi and g[j] < 0:
            proj[j] = 0.0
    gnorm = float(np.abs(proj).max())
    scale = max(1.0, abs(float(res.fun)))
    if not (res.success or gnorm < 1e-5 * scale):
        raise ConvergenceError(f"{what}: optimizer did not converge ({res.message})",
                               {"iterations": int(res.nit), "grad_norm": gnorm})
    return res.x, -float(res.fun), int(res.nit), gnorm


def fit_negbin(data: DesignMatrix, spec: ModelSpec | None = None) -> FitResult:
    spec = spec or ModelSpec(family=NEGBIN)
    data = _prepare(data, spec)
    X, y = data.X, data.y
    beta0, _, _, _, _ = _newton_poisson(X, y, spec.max_iter, spec.gtol)
    mu0 = np.exp(X @ beta0)
    alpha0 = max(float(np.sum((y - mu0) ** 2 - y) / np.sum(mu0 ** 2)), 0.01)
    p = X.shape[1]

    def negll(theta):
        try:
            ll, g = nb_loglike(theta[:p], theta[p], X, y, grad=True)
        except ConvergenceError:
            return math.inf, np.zeros_like(theta)
        return -ll, -g

    bounds = [(None, None)] * p + [(0.0, None)]
    theta, ll, it, gnorm = _quasi_newton(negll, np.append(beta0, alpha0), bounds, spec.max_iter, "negbin")

    def g_fn(th):
        return nb_loglike(th[:p], th[p], X, y, grad=True)[1]

    H = _numeric_hessian(g_fn, theta)
    cov = _covariance(-H, {"iterations": it})
    se, z, pv = _stats(theta, np.diag(cov))
    names = data.names
    res = FitResult(
        family=NEGBIN, names=names,
        beta=dict(zip(names, theta[:p].tolist())), se=dict(zip(names, se[:p].tolist())),
        z_values=dict(zip(names, z[:p].tolist())), p_values=dict(zip(names, pv[:p].tolist())),
        alpha=float(theta[p]), alpha_se=float(se[p]), alpha_z=float(z[p]) if theta[p] > 0 else 0.0,
        ll_converged=ll, iterations=it, grad_norm=gnorm, converged=True,
    )
    return _finish(res, data)


def simulated_loglike(data: DesignMatrix, beta, sigma, random_covariates: Sequence[str],
                      n_draws: int = 200, skip: int = DEFAULT_SKIP) -> float:
    idx = [data.names.index(c) for c in random_covariates]
    sim = _Simulator(data.X, data.y, idx, n_draws, skip)
    return sim.loglike(np.asarray(beta, dtype=float), np.asarray(sigma, dtype=float))


def fit_random_poisson(data: DesignMatrix, spec: ModelSpec) -> FitResult:
    if spec.family != RANDOM_POISSON:
        spec = ModelSpec(**{**asdict(spec), "family": RANDOM_POISSON})
    data = _prepare(data, spec)
    X, y = data.X, data.y
    p = X.shape[1]
    ridx = [data.names.index(c) for c in spec.random_covariates]
    sim = _Simulator(X, y, ridx, spec.n_draws, spec.halton_skip)
    beta0, _, _, _, _ = _newton_poisson(X, y, spec.max_iter, spec.gtol)
    sigma0 = np.maximum(0.1 * np.abs(beta0[ridx]), 0.01 / np.maximum(X[:, ridx].std(axis=0), 1e-12))

    def negll(theta):
        try:
            ll, g = sim.loglike(theta[:p], theta[p:], grad=True)
        except ConvergenceError:
            return math.inf, np.zeros_like(theta)
        return -ll, -g

    bounds = [(None, None)] * (p + len(ridx))
    theta, ll, it, gnorm = _quasi_newton(negll, np.concatenate([beta0, sigma0]), bounds,
                                         spec.max_iter, "random_poisson")
    H = _numeric_hessian(lambda th: sim.loglike(th[:p], th[p:], grad=True)[1], theta)
    cov = _covariance(-H, {"iterations": it})
    se, z, pv = _stats(theta, np.diag(cov))
    names = data.names
    rnames = list(spec.random_covariates)
    sig = np.abs(theta[p:])
    res = FitResult(
        family=RANDOM_POISSON, names=names,
        beta=dict(zip(names, theta[:p].tolist())), se=dict(zip(names, se[:p].tolist())),
        z_values=dict(zip(names, z[:p].tolist())), p_values=dict(zip(names, pv[:p].tolist())),
        sigma=dict(zip(rnames, sig.tolist())), sigma_se=dict(zip(rnames, se[p:].tolist())),
        sigma_z=dict(zip(rnames, (sig / se[p:]).tolist())),
        ll_converged=ll, iterations=it, grad_norm=gnorm, converged=True,
        n_draws=spec.n_draws, halton_skip=spec.halton_skip,
    )
    return _finish(res, data)


def fit(data: DesignMatrix, spec: ModelSpec) -> FitResult:
    if spec.family == POISSON:
        return fit_poisson(data, spec)
    if spec.family == NEGBIN:
        return fit_negbin(data, spec)
    return fit_random_poisson(data, spec)


# ------------------------------------------------------- post-estimation

def _aligned(fit: FitResult, data: DesignMatrix) -> DesignMatrix:
    if INTERCEPT in fit.names and INTERCEPT not in data.names:
        data = DesignMatrix.build({n: data.column(n) for n in data.names}, data.y, True, data.row_ids)
    return data.select(fit.names)


def expected_counts(fit: FitResult, data: DesignMatrix) -> np.ndarray:
    """Fitted means; simulated over the same Halton draws for random-parameter fits."""
    data = _aligned(fit, data)
    beta = fit.beta_vector
    if fit.family != RANDOM_POISSON:
        return np.exp(_eta(data.X, beta))
    idx = [data.names.index(c) for c in fit.random_names]
    sim = _Simulator(data.X, data.y, idx, fit.n_draws, fit.halton_skip)
    return sim.expected(beta, fit.sigma_vector)


def _is_binary(col: np.ndarray) -> bool:
    return bool(np.all((col == 0) | (col == 1)))


def marginal_effects(fit: FitResult, data: DesignMatrix) -> dict[str, float]:
    """Average change in expected count per unit change of each covariate.

    Continuous: mean of beta_j * lambda_i. Binary 0/1: mean of
    lambda_i(x_j = 1) - lambda_i(x_j = 0).
    """
    data = _aligned(fit, data)
    beta = fit.beta_vector
    out = {}
    random = fit.family == RANDOM_POISSON
    if random:
        idx = [data.names.index(c) for c in fit.random_names]
        sim = _Simulator(data.X, data.y, idx, fit.n_draws, fit.halton_skip)
        sigma = fit.sigma_vector
    for j, name in enumerate(data.names):
        if name == INTERCEPT:
            continue
        col = data.X[:, j]
        if _is_binary(col) and len(np.unique(col)) > 1:
            X1, X0 = data.X.copy(), data.X.copy()
            X1[:, j], X0[:, j] = 1.0, 0.0
            if random:
                s1 = _Simulator(X1, data.y, idx, fit.n_draws, fit.halton_skip)
                s0 = _Simulator(X0, data.y, idx, fit.n_draws, fit.halton_skip)
                diff = s1.expected(beta, sigma) - s0.expected(beta, sigma)
            else:
                diff = np.exp(X1 @ beta) - np.exp(X0 @ beta)
            out[name] = float(diff.mean())
        elif random:
            lam = np.exp(sim.eta(beta, sigma))  # (n, R)
            b = beta[j]
            if name in fit.random_names:
                k = fit.random_names.index(name)
                b = beta[j] + sigma[k] * sim.Z[:, :, k]
            out[name] = float(np.mean(b * lam))
        else:
            out[name] = float(np.mean(beta[j] * np.exp(data.X @ beta)))
    return out


def lm_overdispersion_test(fit: FitResult, data: DesignMatrix) -> tuple[float, float]:
    """LM statistic [sum((y - mu)^2 - y)]^2 / (2 sum mu^2) against chi-square(1)."""
    mu = expected_counts(fit, data)
    y = np.asarray(data.y, dtype=float)
    stat = float(np.sum((y - mu) ** 2 - y) ** 2 / (2.0 * np.sum(mu ** 2)))
    return stat, float(chi2.sf(stat, 1))


# ------------------------------------------------------------ rendering

def _stars(p):
    if p is None or not math.isfinite(p):
        return ""
    return "***" if p < 0.001 else "**" if p < 0.01 else "*" if p < 0.05 else "." if p < 0.1 else ""


def format_table(fit: FitResult) -> str:
    """Plain-text coefficient table: estimate, z value, marginal effect, then summary statistics."""
    lines = [f"{fit.family} model", f"{'Variable':<32}{'Estimate':>12}{'z value':>10}{'Marg. eff.':>12}"]
    for n in fit.names:
        me = fit.marginal_effects.get(n)
        lines.append(f"{n:<32}{fit.beta[n]:>9.3f}{_stars(fit.p_values[n]):<3}{fit.z_values[n]:>10.2f}"
                     f"{'--' if me is None else format(me, '.2f'):>12}")
        if n in fit.sigma:
            lines.append(f"{'  Std. dev.':<32}{fit.sigma[n]:>9.3f}{'':<3}{fit.sigma_z[n]:>10.2f}{'--':>12}")
    if fit.alpha is not None:
        lines.append(f"{'alpha':<32}{fit.alpha:>9.3f}{'':<3}{fit.alpha_z:>10.2f}{'--':>12}")
    lines += [
        "Summary statistics",
        f"{'AIC':<32}{fit.aic:>12.2f}",
        f"{'Log-likelihood at zero L(0)':<32}{fit.ll_zero:>12.2f}",
        f"{'Log-likelihood at convergence':<32}{fit.ll_converged:>12.2f}",
        f"{'McFadden rho^2':<32}{fit.mcfadden:>12.3f}",
        f"{'Sample size (N)':<32}{fit.n_obs:>12d}",
    ]
    return "\n".join(lines) + "\n"
