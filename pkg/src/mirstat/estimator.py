"""Adaptive multiscale IR estimator of the memory parameter d."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from statistics import NormalDist

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_level, check_series
from .asymcov import ClampWarning, load_default_table, sigma_hat, sigma_p
from .ir import N_MIN_TERMS, ir_profile
from .lambdas import lambda0_inverse

MIN_LENGTH = 50
CLT_LIMIT = 1.25
_RIDGE = 1e-8


def select_p(n):
    """Number of scales used by default for a series of length ``n``."""
    n = int(n)
    if n < 120:
        return 5
    if n < 800:
        return 10
    if n < 10_000:
        return 15
    return 20


def _table_for(p, table):
    if table is None:
        return load_default_table(p)
    if table.p < p:
        raise ValueError(f"gamma table has p={table.p}, need at least {p}")
    return table if table.p == p else table.submatrix(p)


def dhat_profile(x, m, p, return_flags=False):
    """Per-scale estimates d_j = Lambda0^-1(IR_N(j m)), j = 1..p.

    With ``return_flags`` the IR profile and a per-scale clamp mask are
    returned too.
    """
    prof = ir_profile(x, m, p)
    dhat, clamped = lambda0_inverse(prof.values, return_flag=True)
    dhat = np.atleast_1d(dhat)
    if return_flags:
        return dhat, prof, np.atleast_1d(clamped)
    return dhat


def gls_estimate(dhat, sigma):
    """Sigma-weighted mean (J' S^-1 J)^-1 J' S^-1 dhat, solved by Cholesky."""
    dhat = np.asarray(dhat, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    p = dhat.size
    if sigma.shape != (p, p):
        raise ValueError(f"covariance shape {sigma.shape} does not match {p} estimates")
    chol = _cholesky(sigma)
    ones = np.linalg.solve(chol, np.ones(p))
    y = np.linalg.solve(chol, dhat)
    return float((ones @ y) / (ones @ ones))


def _cholesky(sigma):
    try:
        return np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        p = sigma.shape[0]
        ridge = _RIDGE * np.trace(sigma) / p
        try:
            return np.linalg.cholesky(sigma + ridge * np.eye(p))
        except np.linalg.LinAlgError:
            raise ValueError("covariance is not positive definite even after ridge") from None


def _quad_form(resid, sigma):
    chol = _cholesky(sigma)
    z = np.linalg.solve(chol, resid)
    return float(z @ z)


@dataclass(frozen=True)
class _Fit:
    m: int
    dhat: np.ndarray
    ir: np.ndarray
    clamped: np.ndarray
    sigma: np.ndarray
    d: float
    q: float


def _fit_at(x, m, p, table):
    dhat, prof, clamped = dhat_profile(x, m, p, return_flags=True)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ClampWarning)
        sig = sigma_hat(m, dhat[0], table)
    d = gls_estimate(dhat, sig)
    q = 0.0 if p == 1 else _quad_form(dhat - d, sig)
    return _Fit(m, dhat, prof.values, clamped, sig, d, q)


def qn(alpha, x, p, table=None):
    """Q_N(alpha): GLS residual quadratic form at base scale floor(N^alpha)."""
    x = check_series(x, MIN_LENGTH)
    m = int(math.floor(x.size ** float(alpha)))
    return _fit_at(x, m, int(p), _table_for(p, table)).q


def candidate_scales(n, p, n_min=N_MIN_TERMS):
    """Feasible base scales m = floor(e^k), k = 2..floor(log(n/p)).

    Returns (ks, ms, truncated) where ``truncated`` is True when the
    feasibility filter N - 3 p m >= n_min removed candidates.
    """
    k_max = int(math.floor(math.log(n / p)))
    ks = np.arange(2, k_max + 1)
    ms = np.floor(np.exp(ks)).astype(int)
    keep = n - 3 * p * ms >= n_min
    return ks[keep], ms[keep], bool(not keep.all())


def select_alpha(x, p, table=None):
    """Minimize Q_N over the feasible part of the alpha grid.

    Returns ``(alpha_hat, scan, truncated, tie)`` where ``scan`` lists
    ``(alpha, m, Q)`` for every candidate.
    """
    x = check_series(x, MIN_LENGTH)
    n = x.size
    table = _table_for(p, table)
    ks, ms, truncated = candidate_scales(n, p)
    if ks.size == 0:
        raise ValueError(f"series too short for p={p}: no feasible scale at N={n}")
    log_n = math.log(n)
    scan = []
    for k, m in zip(ks, ms):
        scan.append((k / log_n, int(m), _fit_at(x, int(m), p, table).q))
    qs = np.array([s[2] for s in scan])
    best = int(np.argmin(qs))  # first minimum, i.e. smallest alpha
    tie = int(np.sum(qs == qs[best])) > 1
    return scan[best][0], scan, truncated, tie


@dataclass(frozen=True)
class EstimationReport:
    """Result of the adaptive estimation of d for one series."""

    d: float
    alpha_hat: float
    alpha_tilde: float
    m_tilde: int
    p: int
    n: int
    dhat: np.ndarray
    ir: np.ndarray
    se: float
    ci: tuple | None
    level: float
    sigma_p: float
    scan: tuple = ()
    flags: frozenset = field(default_factory=frozenset)

    @property
    def has_ci(self):
        return self.ci is not None

    def summary(self):
        ci = "n/a" if self.ci is None else f"[{self.ci[0]:.4f}, {self.ci[1]:.4f}]"
        lines = [
            f"d_tilde     {self.d:.6f}",
            f"se          {self.se:.6f}",
            f"CI ({1 - self.level:.0%})    {ci}",
            f"alpha_hat   {self.alpha_hat:.4f}",
            f"alpha_tilde {self.alpha_tilde:.4f}",
            f"m_tilde     {self.m_tilde}",
            f"p           {self.p}",
            f"N           {self.n}",
        ]
        if self.flags:
            lines.append("flags       " + ",".join(sorted(self.flags)))
        return "\n".join(lines)


def corrected_alpha(alpha_hat, n, p):
    """alpha_hat + 6 alpha_hat / ((p-2)(1-alpha_hat)) * log log N / log N."""
    log_n = math.log(n)
    return alpha_hat + 6.0 * alpha_hat / ((p - 2) * (1.0 - alpha_hat)) * math.log(log_n) / log_n


def adaptive_estimate(x, level=0.05, p=None, table=None):
    """Adaptive IR estimate of d with its asymptotic confidence interval.

    ``level`` is the type-I error of the two-sided interval. ``p``
    defaults to :func:`select_p`. ``table`` defaults to the packaged
    analytic covariance table.
    """
    x = check_series(x, MIN_LENGTH)
    level = check_level(level)
    n = x.size
    p = select_p(n) if p is None else int(p)
    if p < 3:
        raise ValueError("the adaptive scale correction needs p >= 3")
    table = _table_for(p, table)
    flags = set()

    alpha_hat, scan, truncated, tie = select_alpha(x, p, table)
    if truncated:
        flags.add("grid_truncated")
    if tie:
        flags.add("q_tie")

    alpha_tilde = corrected_alpha(alpha_hat, n, p)
    m_tilde = int(math.floor(n ** alpha_tilde))
    m_max = (n - N_MIN_TERMS) // (3 * p)
    if m_tilde > m_max:
        m_tilde = m_max
        alpha_tilde = math.log(m_tilde) / math.log(n)
        flags.add("alpha_clamped")

    fit = _fit_at(x, m_tilde, p, table)
    if fit.clamped.any():
        flags.add("ir_clamped")
    d = fit.d

    rate = n ** ((alpha_tilde - 1.0) / 2.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ClampWarning)
        sp = sigma_p(d, table)
    if d >= CLT_LIMIT or not np.isfinite(d):
        flags.add("no_ci")
        se, ci = float("nan"), None
    else:
        se = sp * rate
        half = NormalDist().inv_cdf(1.0 - level / 2.0) * se
        ci = (d - half, d + half)

    return EstimationReport(
        d=d,
        alpha_hat=alpha_hat,
        alpha_tilde=alpha_tilde,
        m_tilde=m_tilde,
        p=p,
        n=n,
        dhat=fit.dhat,
        ir=fit.ir,
        se=se,
        ci=ci,
        level=level,
        sigma_p=sp,
        scan=tuple(scan),
        flags=frozenset(flags),
    )


class MIREstimator(BaseEstimator, TransformerMixin):
    """Scikit-learn style wrapper around :func:`adaptive_estimate`.

    ``fit`` takes one series. ``transform`` takes a batch of series
    (rows) and returns one ``[d_tilde, se]`` row per series.
    """

    def __init__(self, level=0.05, p=None, table=None):
        self.level = level
        self.p = p
        self.table = table

    def fit(self, X, y=None):
        report = adaptive_estimate(X, level=self.level, p=self.p, table=self.table)
        self.report_ = report
        self.d_ = report.d
        self.se_ = report.se
        self.conf_int_ = report.ci
        self.alpha_ = report.alpha_tilde
        self.m_ = report.m_tilde
        self.p_ = report.p
        return self

    def transform(self, X):
        check_is_fitted(self, "report_")
        batch = np.asarray(X, dtype=float)
        if batch.ndim == 1:
            batch = batch[None, :]
        if batch.ndim != 2:
            raise ValueError(f"expected a 2-D batch of series, got shape {batch.shape}")
        out = np.empty((batch.shape[0], 2))
        for i, row in enumerate(batch):
            rep = adaptive_estimate(row, level=self.level, p=self.p, table=self.table)
            out[i] = rep.d, rep.se
        return out


class IRProfileTransformer(BaseEstimator, TransformerMixin):
    """Map each series (row) to its IR profile at scales m, 2m, ..., pm."""

    def __init__(self, m=10, p=5):
        self.m = m
        self.p = p

    def fit(self, X, y=None):
        self.n_features_in_ = np.asarray(X).shape[-1]
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_in_")
        batch = np.atleast_2d(np.asarray(X, dtype=float))
        return np.vstack([ir_profile(row, self.m, self.p).values for row in batch])
