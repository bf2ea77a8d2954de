"""Semiparametric tests of d against a threshold, built on the adaptive estimate."""

from __future__ import annotations

from dataclasses import dataclass
from statistics import NormalDist

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_level
from .asymcov import load_default_table, sigma_p
from .estimator import CLT_LIMIT, adaptive_estimate

_STD_NORMAL = NormalDist()
ACCEPT = "accept H0"
REJECT = "reject H0"


def normal_quantile(q):
    """Inverse standard normal CDF."""
    q = float(q)
    if not 0.0 < q < 1.0:
        raise ValueError(f"quantile level must lie in (0, 1), got {q}")
    return _STD_NORMAL.inv_cdf(q)


def normal_cdf(z):
    return _STD_NORMAL.cdf(float(z))


@dataclass(frozen=True)
class TestDecision:
    """Verdict of one threshold test on an estimation report.

    ``p_value`` is the one-sided normal tail probability at the boundary
    of the null (asymptotic, plug-in variance).
    """

    __test__ = False  # not a pytest class

    kind: str
    d0: float
    statistic: float
    threshold: float
    level: float
    decision: str
    p_value: float
    n: int
    p: int
    alpha_tilde: float

    @property
    def rejected(self):
        return self.decision == REJECT

    def summary(self):
        return (
            f"{self.kind} test (d0={self.d0:g}, level={self.level:g}): {self.decision}; "
            f"d={self.statistic:.4f}, threshold={self.threshold:.4f}, p-value={self.p_value:.4g}"
        )


def _spread(report, d0, table):
    if not np.isfinite(report.d):
        raise ValueError("report has a non-finite estimate")
    table = load_default_table(report.p) if table is None else table
    if table.p != report.p:
        table = table.submatrix(report.p)
    return sigma_p(d0, table) * report.n ** ((report.alpha_tilde - 1.0) / 2.0)


def _check_d0(d0):
    d0 = float(d0)
    if not -0.5 < d0 < CLT_LIMIT:
        raise ValueError(f"d0 must lie in (-0.5, {CLT_LIMIT}), got {d0}")
    return d0


def threshold_test(report, d0, level=0.05, table=None, kind=None):
    """Test H0: d <= d0 against d > d0.

    H0 is rejected when the estimate exceeds
    ``d0 + sigma_p(d0) q_{1-level} N^((alpha_tilde-1)/2)``.
    """
    d0 = _check_d0(d0)
    level = check_level(level)
    spread = _spread(report, d0, table)
    threshold = d0 + normal_quantile(1.0 - level) * spread
    reject = report.d > threshold
    p_value = 1.0 - normal_cdf((report.d - d0) / spread)
    return TestDecision(
        kind=kind or f"threshold({d0:g})",
        d0=d0,
        statistic=report.d,
        threshold=threshold,
        level=level,
        decision=REJECT if reject else ACCEPT,
        p_value=p_value,
        n=report.n,
        p=report.p,
        alpha_tilde=report.alpha_tilde,
    )


def stationarity_test(report, level=0.05, table=None):
    """H0: d < 0.5 (stationary) against d >= 0.5."""
    return threshold_test(report, 0.5, level, table, kind="stationarity")


def nonstationarity_test(report, level=0.05, table=None):
    """H0': d >= 0.5 against d < 0.5 (stationary).

    H0' is rejected when the estimate falls below
    ``0.5 - sigma_p(0.5) q_{1-level} N^((alpha_tilde-1)/2)``.
    """
    level = check_level(level)
    spread = _spread(report, 0.5, table)
    threshold = 0.5 - normal_quantile(1.0 - level) * spread
    reject = report.d < threshold
    p_value = normal_cdf((report.d - 0.5) / spread)
    return TestDecision(
        kind="nonstationarity",
        d0=0.5,
        statistic=report.d,
        threshold=threshold,
        level=level,
        decision=REJECT if reject else ACCEPT,
        p_value=p_value,
        n=report.n,
        p=report.p,
        alpha_tilde=report.alpha_tilde,
    )


_KINDS = {"stat": "stationarity", "stationarity": "stationarity",
          "nonstat": "nonstationarity", "nonstationarity": "nonstationarity",
          "threshold": "threshold"}


def run_test(report, kind, level=0.05, d0=None, table=None):
    """Dispatch on ``kind`` in {stat, nonstat, threshold}."""
    try:
        name = _KINDS[kind]
    except KeyError:
        raise ValueError(f"unknown test kind {kind!r}") from None
    if name == "stationarity":
        return stationarity_test(report, level, table)
    if name == "nonstationarity":
        return nonstationarity_test(report, level, table)
    if d0 is None:
        raise ValueError("threshold test needs d0")
    return threshold_test(report, d0, level, table)


class MemoryTest(BaseEstimator):
    """Estimator-style front end: ``fit`` a series, read ``decision_``."""

    def __init__(self, kind="stat", level=0.05, d0=None, p=None, table=None):
        self.kind = kind
        self.level = level
        self.d0 = d0
        self.p = p
        self.table = table

    def fit(self, X, y=None):
        self.report_ = adaptive_estimate(X, level=self.level, p=self.p, table=self.table)
        self.decision_ = run_test(self.report_, self.kind, self.level, self.d0, self.table)
        return self

    def predict(self, X):
        """1 where the null is rejected, 0 otherwise, for each series (row)."""
        check_is_fitted(self, "decision_")
        batch = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.empty(batch.shape[0], dtype=int)
        for i, row in enumerate(batch):
            rep = adaptive_estimate(row, level=self.level, p=self.p, table=self.table)
            out[i] = run_test(rep, self.kind, self.level, self.d0, self.table).rejected
        return out

