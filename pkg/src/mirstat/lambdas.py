"""Correlation-to-expectation maps used by the IR estimator.

``lam(r)`` is E|X+Y|/(|X|+|Y|) for a standardized Gaussian pair with
correlation ``r``; ``rho(d)`` is the large-scale correlation of two
consecutive aggregated second-order increments of an I(d) process, and
``lambda0(d) = lam(rho(d))`` is the limit of E[IR_N(m)] as m grows.
"""

from __future__ import annotations

import math

import numpy as np

D_MIN = -0.499
D_MAX = 1.499
RHO_HALF = 9.0 * math.log(3.0) / (8.0 * math.log(2.0)) - 2.0

_LN4 = math.log(4.0)
_LN9 = math.log(9.0)


def _check_d(d):
    d = np.asarray(d, dtype=float)
    if np.any(~np.isfinite(d)) or np.any(d <= -0.5) or np.any(d >= 1.5):
        raise ValueError(f"memory parameter must lie in (-0.5, 1.5), got {d}")
    return d


def rho(d):
    """Asymptotic lag-one correlation of normalized second differences.

    The closed form ``(4^(d+1.5) - 9^(d+0.5) - 7) / (2 (4 - 4^(d+0.5)))``
    has a removable singularity at ``d = 0.5``; it is evaluated in the
    expm1 form ``(16 u - 9 v) / (-8 u)`` with ``u = expm1(e ln 4)``,
    ``v = expm1(e ln 9)``, ``e = d - 0.5``. The numerator does not cancel
    as ``e -> 0``, so only ``d = 0.5`` itself needs the limit.
    """
    d = _check_d(d)
    e = d - 0.5
    near = e == 0.0
    e_safe = np.where(near, 1.0, e)
    u = np.expm1(e_safe * _LN4)
    v = np.expm1(e_safe * _LN9)
    out = np.where(near, RHO_HALF, (16.0 * u - 9.0 * v) / (-8.0 * u))
    return out if out.ndim else float(out)


def lam(r):
    """E|X+Y| / (|X|+|Y|) for a standard Gaussian pair with correlation r."""
    r = np.asarray(r, dtype=float)
    if np.any(~np.isfinite(r)) or np.any(np.abs(r) > 1.0):
        raise ValueError(f"correlation must lie in [-1, 1], got {r}")
    lo = r <= -1.0
    hi = r >= 1.0
    rs = np.clip(r, -1.0 + 1e-300, 1.0 - 1e-16)
    q = np.sqrt((1.0 + rs) / (1.0 - rs))
    with np.errstate(divide="ignore", invalid="ignore"):
        val = (2.0 / np.pi) * np.arctan(q) + (q / np.pi) * np.log(2.0 / (1.0 + rs))
    out = np.where(lo, 0.0, np.where(hi, 1.0, val))
    return out if out.ndim else float(out)


def lambda0(d):
    """Large-scale limit of E[IR_N(m)] for memory parameter ``d``."""
    return lam(rho(d))


def lambda0_prime(d, h=1e-5):
    """Derivative of ``lambda0`` by Richardson-extrapolated central differences."""
    d = _check_d(d)
    # shrink the step near the domain edges so both probes stay inside
    step = np.minimum(h, np.minimum(d + 0.5, 1.5 - d) * 0.5)

    def central(s):
        return (lambda0(d + s) - lambda0(d - s)) / (2.0 * s)

    out = (4.0 * central(step / 2.0) - central(step)) / 3.0
    return out if np.ndim(out) else float(out)


def lambda0_inverse(v, tol=1e-10, return_flag=False):
    """Solve ``lambda0(d) = v`` for d by bisection on [-0.499, 1.499].

    Values outside ``[lambda0(-0.499), lambda0(1.499)]`` are clamped to
    the nearest bound; with ``return_flag=True`` a boolean array marking
    clamped entries is returned as well.
    """
    v = np.asarray(v, dtype=float)
    lo_v, hi_v = lambda0(D_MIN), lambda0(D_MAX)
    clamped = (v < lo_v) | (v > hi_v) | ~np.isfinite(v)
    target = np.clip(np.nan_to_num(v, nan=hi_v), lo_v, hi_v)
    a = np.full(target.shape, D_MIN)
    b = np.full(target.shape, D_MAX)
    n_iter = int(math.ceil(math.log2((D_MAX - D_MIN) / tol))) + 1
    for _ in range(n_iter):
        mid = 0.5 * (a + b)
        below = lambda0(mid) < target
        a = np.where(below, mid, a)
        b = np.where(below, b, mid)
    d = 0.5 * (a + b)
    d = np.where(target <= lo_v, D_MIN, np.where(target >= hi_v, D_MAX, d))
    if not d.ndim:
        d = float(d)
        clamped = bool(clamped)
    if return_flag:
        return d, clamped
    return d
