"""Asymptotic covariance of the multiscale IR vector.

The limit process ``Z^{(j)}`` is the normalized second difference at lag
``j`` of a self-similar Gaussian process with index ``H' = d + 1/2`` and
stationary increments (fractional Brownian motion for ``d < 1/2``, its
integral for ``d > 1/2``, the logarithmic kernel at ``d = 1/2``). With
``w = (1, -2, 1)``

    Cov(Z^{(i)}(u), Z^{(j)}(v)) = sum_{a,b} w_a w_b K(v + b j - u - a i),

where ``K(x) = -|x|^{2H'} / (2 (4 - 4^{H'}))`` is the variogram-type kernel
normalized to give ``Var Z^{(1)} = 1``. Only the ``|x|^{2H'}`` part of the
covariance survives second differencing, which is why one kernel covers
both sides of 1/2.

``sigma_ij(d)`` integrates over the lag ``tau`` the covariance of
``psi(Z_i(0), Z_i(i))`` and ``psi(Z_j(tau), Z_j(tau + j))`` with
``psi(x, y) = |x + y| / (|x| + |y|)``.
"""

from __future__ import annotations

import hashlib
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import PchipInterpolator

from .ir import ir_profile
from .lambdas import lam, lambda0_prime
from .sim import ARFIMA, simulate

logger = logging.getLogger(__name__)

D_TABLE_MIN = -0.49
D_TABLE_MAX = 1.24
_W = np.array([1.0, -2.0, 1.0])
_LN4 = math.log(4.0)
TABLE_HEADER = "#mir-gamma-table v1"
DATA_DIR = Path(__file__).with_name("data")


class ClampWarning(UserWarning):
    """A memory parameter was clamped into the tabulated range."""


# --------------------------------------------------------------------------
# covariance of the limit process


def _kernel(x, d):
    """K(x) = x^2 expm1(2e log|x|) / (8 expm1(e ln 4)), e = d - 1/2.

    This equals ``-|x|^(2d+1) / (2 (4 - 4^(d+1/2)))`` up to a multiple of
    ``x^2``, which second differencing annihilates. The form is smooth
    through ``d = 1/2`` where it tends to ``x^2 log|x| / (8 ln 2)``.
    """
    x = np.abs(np.asarray(x, dtype=float))
    e = d - 0.5
    pos = x > 0
    logx = np.log(np.where(pos, x, 1.0))
    if abs(e) < 1e-9:
        val = x * x * logx / (8.0 * math.log(2.0))
    else:
        a = 2.0 * e * logx
        # tiny x with e < 0: expm1 overflows, use x^(2d+1) - x^2 directly
        big = a > 700.0
        num = np.where(big, np.exp((2.0 + 2.0 * e) * logx) - x * x, x * x * np.expm1(np.minimum(a, 700.0)))
        val = num / (8.0 * math.expm1(e * _LN4))
    return np.where(pos, val, 0.0)


def _h(x):
    ax = np.abs(x)
    t = lambda y: np.where(y > 0, y * y * np.log(np.where(y > 0, y, 1.0)), 0.0)  # noqa: E731
    return 0.5 * (t(np.abs(ax - 1)) + t(ax + 1) - 2 * t(ax))


def _zcov_printed(d, i, j, u, v):
    """Alternative closed forms with unit-interval increments (comparison only)."""
    if abs(d - 0.5) <= 1e-6:
        tau = v - u
        return (-_h(tau + i - j) + _h(tau + i) + _h(tau - j) - _h(tau)) / (4 * math.log(2))
    if d < 0.5:
        return z_cov(d, i, j, u, v)
    hh = d - 0.5
    c2 = 2 * d * (2 * d + 1) / abs(4 ** (d + 0.5) - 4)

    def phi(x):
        return np.abs(x) ** (2 * hh + 2) / ((2 * hh + 1) * (2 * hh + 2))

    def dd(x):
        return phi(x + 1) - 2 * phi(x) + phi(x - 1)

    delta = u - v
    return c2 / 2 * (dd(delta + i) + dd(delta - j) - dd(delta + i - j) - dd(delta))


def z_cov(d, i, j, u, v, variant="increment"):
    """Cov(Z^{(i)}(u), Z^{(j)}(v)); vectorized over ``u`` and ``v``.

    ``variant="printed"`` evaluates the alternative unit-interval closed
    forms for ``d >= 0.5``. They agree with the default at ``i = j = 1`` but
    not in general, and are kept for comparison studies.
    """
    if not -0.5 < d < 1.5:
        raise ValueError(f"d must lie in (-0.5, 1.5), got {d}")
    if i < 1 or j < 1:
        raise ValueError("scales must be positive")
    if variant == "printed":
        return _zcov_printed(d, i, j, np.asarray(u, float), np.asarray(v, float))
    if variant != "increment":
        raise ValueError(f"unknown variant {variant!r}")
    base = np.asarray(v, dtype=float) - np.asarray(u, dtype=float)
    total = np.zeros(np.broadcast(base).shape)
    for a in range(3):
        for b in range(3):
            total = total + _W[a] * _W[b] * _kernel(base + (b * j - a * i), d)
    return total if total.ndim else float(total)


def _sigma4(d, i, j, tau, variant):
    """4x4 covariances of (Z_i(0), Z_i(i), Z_j(tau), Z_j(tau+j)); shape (n, 4, 4).

    Lags are formed as ``tau + integer`` rather than as differences of
    positions: for small ``d`` the kernel is steep enough at 0 that a
    rounding residue of 1e-15 in a zero lag would be visible.
    """
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    n = tau.size
    s = np.empty((n, 4, 4))
    within_i = z_cov(d, i, i, 0.0, np.array([0.0, float(i)]), variant)
    within_j = z_cov(d, j, j, 0.0, np.array([0.0, float(j)]), variant)
    s[:, 0, 0] = s[:, 1, 1] = within_i[0]
    s[:, 0, 1] = s[:, 1, 0] = within_i[1]
    s[:, 2, 2] = s[:, 3, 3] = within_j[0]
    s[:, 2, 3] = s[:, 3, 2] = within_j[1]
    # (first index, second index, integer part of the lag)
    for p, q, off in ((0, 2, 0), (0, 3, j), (1, 2, -i), (1, 3, j - i)):
        val = z_cov(d, i, j, 0.0, tau + off, variant)
        s[:, p, q] = s[:, q, p] = val
    return s


# --------------------------------------------------------------------------
# settings


@dataclass(frozen=True)
class QuadratureSettings:
    """Numerical scheme for ``sigma_ij``.

    ``truncation`` is the integration half-width beyond the kink hull of
    the integrand, in units of the smaller scale; ``panel_width`` is the
    largest Gauss-Legendre panel (same units) inside the hull. The inner
    expectation uses ``method``: ``"angular"`` (two-angle reduction with
    adaptive panels, the default), ``"gauss-hermite"`` (tensor rule of
    ``order`` points per axis) or ``"monte-carlo"`` (``mc_n`` draws with
    common random numbers across lags).
    """

    truncation: float = 50.0
    panel_width: float = 0.5
    tau_nodes: int = 8
    outer_panels: int = 24
    method: str = "angular"
    order: int = 24
    mc_n: int = 200_000
    mc_seed: int = 0
    angular_nodes: int = 8
    angular_tol: float = 1e-9
    tail_correction: bool = True
    variant: str = "increment"

    def __post_init__(self):
        if self.truncation <= 3:
            raise ValueError("truncation must exceed 3 scale units")
        if self.panel_width <= 0:
            raise ValueError("panel_width must be positive")
        if self.method not in ("angular", "gauss-hermite", "monte-carlo"):
            raise ValueError(f"unknown inner method {self.method!r}")
        if self.method == "gauss-hermite" and self.order < 8:
            raise ValueError("Gauss-Hermite order must be at least 8")
        if self.variant not in ("increment", "printed"):
            raise ValueError(f"unknown covariance variant {self.variant!r}")

    def fingerprint(self):
        text = repr(sorted(asdict(self).items()))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


# --------------------------------------------------------------------------
# inner expectation E[psi(X1, X2) psi(X3, X4)]


def _g(phi):
    c, s = np.cos(phi), np.sin(phi)
    return np.abs(c + s) / (np.abs(c) + np.abs(s))


def _radial_kernel(theta, sin_theta):
    """int_0^inf int_0^inf s t exp(-(s^2 - 2 cos(theta) s t + t^2)/2) ds dt.

    Equals ``(sin t - t cos t) / sin^3 t``; ``sin_theta`` is passed in
    separately because callers know it more accurately than ``sin(theta)``.
    """
    num = sin_theta - theta * np.cos(theta)
    small = theta < 0.1
    if np.any(small):
        t = theta[small]
        t2 = t * t
        num[small] = t**3 * (1 / 3 - t2 / 30 + t2 * t2 / 840 - t2**3 / 45360)
    with np.errstate(divide="ignore", invalid="ignore"):
        return num / sin_theta**3


def _angular_expectation(cov, n1, m2, nq, levels):
    """E[g(phi1) g(phi2)] and total mass over the joint law of the pair angles.

    The second pair is handled through its conditional law given the first,
    ``N(M x1, C)``, which keeps every quadratic form free of cancellation
    when the 4x4 covariance is nearly singular. For each first angle the
    second angle is integrated after a tangent substitution centred on the
    conditional mean direction, with breakpoints at the kinks of ``g``;
    ``levels > 0`` adds geometric grading toward multiples of pi/2, where
    nearly rank-deficient covariances produce near-jumps.
    """
    x, w = leggauss(nq)
    s11 = cov[:, :2, :2]
    s12 = cov[:, :2, 2:]
    s11_inv = np.linalg.inv(s11)
    mmat = np.einsum("kji,kjl->kil", s12, s11_inv)
    c = cov[:, 2:, 2:] - np.einsum("kij,kjl->kil", mmat, s12)
    c = 0.5 * (c + np.swapaxes(c, 1, 2))
    det_c = c[:, 0, 0] * c[:, 1, 1] - c[:, 0, 1] ** 2
    c_inv = np.empty_like(c)
    c_inv[:, 0, 0] = c[:, 1, 1]
    c_inv[:, 1, 1] = c[:, 0, 0]
    c_inv[:, 0, 1] = c_inv[:, 1, 0] = -c[:, 0, 1]
    c_inv /= det_c[:, None, None]

    quarter = np.pi / 2.0
    offs = np.pi / 8.0 * 2.0 ** -np.arange(1, levels + 1) if levels else np.empty(0)
    # first angle on [0, pi): symmetry (x -> -x) covers the other half
    e1 = np.linspace(0.0, np.pi, n1 + 1)
    if levels:
        centres = np.array([0.0, quarter, np.pi])
        e1 = np.concatenate([e1, (centres[:, None] + offs).ravel(), (centres[:, None] - offs).ravel()])
        e1 = np.unique(np.clip(e1, 0.0, np.pi))
    h1 = np.diff(e1) / 2.0
    phi1 = (e1[:-1, None] + h1[:, None] * (x + 1.0)).ravel()
    wt1 = (h1[:, None] * w).ravel()
    u1 = np.stack([np.cos(phi1), np.sin(phi1)], axis=1)

    a0 = np.einsum("ni,kij,nj->kn", u1, s11_inv, u1)
    mu = np.einsum("kij,nj->kni", mmat, u1)
    mu2 = np.einsum("kni,kni->kn", mu, mu)
    cmu = np.einsum("kij,knj->kni", c_inv, mu)
    a = a0 + np.einsum("kni,kni->kn", mu, cmu)
    centre = np.arctan2(mu[..., 1], mu[..., 0])
    perp = np.stack([-mu[..., 1], mu[..., 0]], axis=-1)
    # mu = 0 when the pairs are independent: no preferred direction, kap = 1
    indep = mu2 <= 0.0
    v_perp = np.einsum("kni,kij,knj->kn", perp, c, perp) / np.where(indep, 1.0, mu2)
    kap = np.where(indep, 1.0, np.clip(np.sqrt(np.maximum(a0 * v_perp, 0.0)), 1e-15, 1.0))

    angles = np.arange(8) * np.pi / 4.0
    if levels:
        jumps = np.arange(4) * quarter
        angles = np.concatenate([angles, (jumps[:, None] + offs).ravel(), (jumps[:, None] - offs).ravel()])
    rel = (angles - centre[..., None] + np.pi) % (2.0 * np.pi) - np.pi
    t_kinks = 2.0 * np.arctan(np.tan(rel / 2.0) / kap[..., None])
    t_grid = np.broadcast_to(np.linspace(-np.pi, np.pi, m2 + 1), kap.shape + (m2 + 1,))
    bp = np.sort(np.concatenate([t_grid, t_kinks], axis=-1), axis=-1)
    h2 = np.diff(bp, axis=-1) / 2.0
    t = (bp[..., :-1, None] + h2[..., None] * (x + 1.0)).reshape(kap.shape + (-1,))
    wt2 = (h2[..., None] * w).reshape(t.shape)
    k3 = kap[..., None]
    phi2 = centre[..., None] + 2.0 * np.arctan(k3 * np.tan(t / 2.0))
    jac = k3 / (np.cos(t / 2.0) ** 2 + (k3 * np.sin(t / 2.0)) ** 2)

    cos2, sin2 = np.cos(phi2), np.sin(phi2)
    cq = (c_inv[:, 0, 0, None, None] * cos2**2 + 2.0 * c_inv[:, 0, 1, None, None] * cos2 * sin2
          + c_inv[:, 1, 1, None, None] * sin2**2)
    b = -(cmu[..., 0, None] * cos2 + cmu[..., 1, None] * sin2)
    cross = mu[..., 0, None] * sin2 - mu[..., 1, None] * cos2
    disc = np.maximum(a0[..., None] * cq + cross**2 / det_c[:, None, None], 0.0)  # a c - b^2
    ac = a[..., None] * cq
    theta = np.arctan2(np.sqrt(disc), b)
    dens = _radial_kernel(theta, np.sqrt(disc / ac)) / ac * wt2 * jac

    det = np.linalg.det(s11) * det_c
    scale = 2.0 / (4.0 * np.pi**2 * np.sqrt(det))
    g2 = np.abs(cos2 + sin2) / (np.abs(cos2) + np.abs(sin2))
    val = scale * np.einsum("n,kn->k", _g(phi1) * wt1, np.einsum("knm,knm->kn", dens, g2))
    mass = scale * np.einsum("n,kn->k", wt1, np.sum(dens, axis=-1))
    return val, mass


def _grading_levels(cov, weights, tol):
    """Octaves of angular grading needed for nearly rank-deficient covariances.

    Features narrower than ``tol / weight`` cannot affect the weighted sum
    beyond the tolerance and are left unresolved.
    """
    s11_inv = np.linalg.inv(cov[:, :2, :2])
    c = cov[:, 2:, 2:] - np.einsum("kji,kjl,klm->kim", cov[:, :2, 2:], s11_inv, cov[:, :2, 2:])
    lam_min = np.maximum(np.linalg.eigvalsh(0.5 * (c + np.swapaxes(c, 1, 2)))[:, 0], 1e-300)
    eps = np.sqrt(lam_min / np.trace(cov[:, 2:, 2:], axis1=1, axis2=2))
    eps = np.maximum(eps, 0.1 * tol / np.maximum(weights, 1e-300))
    levels = np.ceil(np.log2(np.pi / 8.0 / eps)).astype(int)
    return np.where(eps >= 0.05, 0, np.clip(levels, 0, 48))


def _inner_angular(cov, settings, weights=None):
    """Angular expectation with per-lag resolution doubling.

    A lag is accepted once its probability mass error, scaled by its outer
    quadrature weight, is below ``angular_tol``. The normalized value is a
    weighted mean of a function in [0, 1], so a lag whose weight alone is
    below the tolerance cannot matter and is accepted at once.
    """
    if weights is None:
        weights = np.ones(cov.shape[0])
    nq = settings.angular_nodes
    levels = _grading_levels(cov, weights, settings.angular_tol)
    out = np.empty(cov.shape[0])
    todo = np.arange(cov.shape[0])
    n1, m2 = 4, 4
    while todo.size:
        vals = np.empty(todo.size)
        mass = np.empty(todo.size)
        for lev in np.unique(levels[todo]):
            grp = np.flatnonzero(levels[todo] == lev)
            per_lag = (n1 + 6 * lev) * nq * (m2 + 8 + 8 * lev) * nq
            chunk = max(1, int(2e6 // per_lag))
            for s in range(0, grp.size, chunk):
                sel = grp[s:s + chunk]
                vals[sel], mass[sel] = _angular_expectation(cov[todo[sel]], n1, m2, nq, int(lev))
        err = np.abs(mass - 1.0)
        w_todo = weights[todo]
        ok = (err * w_todo <= settings.angular_tol) | (w_todo <= settings.angular_tol)
        if n1 >= 32:
            if not np.all(ok):
                logger.warning("angular quadrature mass error %.2e at %d lags", float(err[~ok].max()), int((~ok).sum()))
            ok[:] = True
        out[todo[ok]] = vals[ok] / mass[ok]
        todo = todo[~ok]
        n1, m2 = 2 * n1, 2 * m2
    return out


def _psi(x1, x2):
    den = np.abs(x1) + np.abs(x2)
    return np.divide(np.abs(x1 + x2), den, out=np.ones_like(den), where=den > 0)


def _inner_sampled(cov, nodes, weights):
    out = np.empty(cov.shape[0])
    for k in range(cov.shape[0]):
        c = cov[k] + 1e-10 * np.trace(cov[k]) / 4 * np.eye(4)
        try:
            chol = np.linalg.cholesky(c)
        except np.linalg.LinAlgError as exc:
            raise np.linalg.LinAlgError("4x4 covariance is not positive semidefinite") from exc
        z = nodes @ chol.T
        out[k] = weights @ (_psi(z[:, 0], z[:, 1]) * _psi(z[:, 2], z[:, 3]))
    return out


def _gh_rule(order):
    x, w = hermegauss(order)
    w = w / w.sum()
    grids = np.meshgrid(*([x] * 4), indexing="ij")
    wgrid = np.meshgrid(*([w] * 4), indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=1)
    weights = np.prod(np.stack([g.ravel() for g in wgrid], axis=1), axis=1)
    return nodes, weights


def _inner(cov, settings, weights=None):
    if settings.method == "angular":
        return _inner_angular(cov, settings, weights)
    if settings.method == "gauss-hermite":
        nodes, weights = _gh_rule(settings.order)
    else:
        nodes = np.random.default_rng(settings.mc_seed).standard_normal((settings.mc_n, 4))
        weights = np.full(settings.mc_n, 1.0 / settings.mc_n)
    return _inner_sampled(cov, nodes, weights)


# --------------------------------------------------------------------------
# sigma_ij


def _graded_panel(lo, hi, toward, q, x, w):
    """Gauss-Legendre on [lo, hi] after the substitution t = k + (hi-lo) s^q.

    Nodes cluster at the endpoint ``toward`` where the integrand has an
    algebraic cusp.
    """
    s = (x + 1.0) / 2.0
    length = hi - lo
    jac = q * s ** (q - 1) * length * w / 2.0
    if toward == lo:
        return lo + length * s**q, jac
    return hi - length * s**q, jac


def _tau_rule(i, j, d, settings):
    """Nodes and weights on [-3j - T s, 3i + T s], s = min(i, j).

    Panels next to each kink (lags where two of the underlying points
    coincide) are graded polynomially toward the kink.
    """
    kinks = np.unique([a * i - b * j for a in range(4) for b in range(4)]).astype(float)
    unit = float(min(i, j))
    width = settings.panel_width * unit
    x, w = leggauss(settings.tau_nodes)
    h_prime = d + 0.5
    q = max(2, int(math.ceil(7.0 / (1.0 + h_prime))))
    # keep the closest node far enough from the kink that the covariance of
    # coinciding points stays numerically nonsingular (delta^(2H') >= 1e-10)
    s_min = (x[0] + 1.0) / 2.0
    while q > 1 and (width * s_min**q) ** (2.0 * h_prime) < 1e-10:
        q -= 1
    nodes, weights = [], []

    def plain(lo, hi):
        half = (hi - lo) / 2.0
        nodes.append(lo + half * (x + 1.0))
        weights.append(half * w)

    def graded(lo, hi, toward):
        t, wt = _graded_panel(lo, hi, toward, q, x, w)
        nodes.append(t)
        weights.append(wt)

    for lo, hi in zip(kinks[:-1], kinks[1:]):
        n = max(2, int(math.ceil((hi - lo) / width - 1e-12)))
        edges = np.linspace(lo, hi, n + 1)
        graded(edges[0], edges[1], lo)
        for a, b in zip(edges[1:-2], edges[2:-1]):
            plain(a, b)
        graded(edges[-2], edges[-1], hi)

    reach = settings.truncation * unit
    grow = np.geomspace(width, reach, settings.outer_panels)
    for sign, base in ((-1.0, kinks[0]), (1.0, kinks[-1])):
        graded(*sorted((base, base + sign * grow[0])), base)
        for a, b in zip(grow[:-1], grow[1:]):
            plain(*sorted((base + sign * a, base + sign * b)))
    nodes = np.concatenate(nodes)
    weights = np.concatenate(weights)
    return nodes, weights, (kinks[0] - reach, kinks[-1] + reach)


def sigma_ij(d, i, j, settings=None, return_details=False):
    """Integrated lag covariance of the scale-``i`` and scale-``j`` psi terms.

    With ``return_details=True`` a dict with the tail estimate, node count
    and the integrand values at the truncation points is returned as well.
    """
    settings = settings or QuadratureSettings()
    if not -0.5 < d < 1.25:
        raise ValueError(f"d must lie in (-0.5, 1.25), got {d}")
    i, j = int(i), int(j)
    if i < 1 or j < 1:
        raise ValueError("scales must be positive")
    nodes, weights, (lo, hi) = _tau_rule(i, j, d, settings)
    # nodes this light cannot move the result (|integrand| <= 1)
    keep = np.abs(weights) > 1e-3 * settings.angular_tol
    nodes, weights = nodes[keep], weights[keep]
    cov = _sigma4(d, i, j, nodes, settings.variant)
    ci = cov[0, 0, 1] / cov[0, 0, 0]
    cj = cov[0, 2, 3] / cov[0, 2, 2]
    mean_prod = lam(np.clip(ci, -1, 1)) * lam(np.clip(cj, -1, 1))
    integrand = _inner(cov, settings, np.abs(weights)) - mean_prod
    body = float(weights @ integrand)

    # the psi covariance has Hermite rank 2, so it decays like
    # Cov(Z_i, Z_j)^2 ~ |tau|^(4d - 6); fit the amplitude on the last nodes
    expo = 4.0 * d - 6.0
    tail = 0.0
    centre = 0.5 * (lo + hi)
    edge_vals = []
    for idx, end in ((np.argmin(nodes), lo), (np.argmax(nodes), hi)):
        t = abs(nodes[idx] - centre)
        amp = integrand[idx] / t**expo
        reach = abs(end - centre)
        tail += amp * reach ** (expo + 1) / -(expo + 1)
        edge_vals.append(float(integrand[idx]))
    value = body + tail if settings.tail_correction else body
    if return_details:
        return value, {"body": body, "tail": tail, "n_tau": nodes.size, "edge_values": edge_vals}
    return value


def gamma_matrix(d, p, settings=None):
    """Assemble Gamma_p(d) from ``sigma_ij`` (upper triangle, mirrored)."""
    settings = settings or QuadratureSettings()
    p = int(p)
    out = np.empty((p, p))
    reduced = {}
    for i in range(1, p + 1):
        for j in range(i, p + 1):
            g = math.gcd(i, j)
            if settings.variant == "increment":
                # self-similarity: sigma_{gi, gj} = g sigma_{i, j}
                key = (i // g, j // g)
                if key not in reduced:
                    reduced[key] = sigma_ij(d, *key, settings)
                val = g * reduced[key]
            else:
                val = sigma_ij(d, i, j, settings)
            out[i - 1, j - 1] = out[j - 1, i - 1] = val
    return out


# --------------------------------------------------------------------------
# tables


@dataclass
class GammaTable:
    """Grid of Gamma_p(d) matrices.

    ``matrices`` has shape ``(len(grid), p, p)``.
    """

    p: int
    grid: np.ndarray
    matrices: np.ndarray
    method: str = "analytic"
    fingerprint: str = "0" * 16
    _interp: object = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.matrices = np.asarray(self.matrices, dtype=float)
        if self.method not in ("analytic", "empirical"):
            raise ValueError(f"unknown table method {self.method!r}")
        if self.grid.ndim != 1 or self.grid.size < 2:
            raise ValueError("table grid needs at least two nodes")
        if np.any(np.diff(self.grid) <= 0):
            raise ValueError("table grid must be strictly increasing")
        if self.matrices.shape != (self.grid.size, self.p, self.p):
            raise ValueError(f"matrices must have shape {(self.grid.size, self.p, self.p)}")
        sym = self.matrices - np.swapaxes(self.matrices, 1, 2)
        scale = np.max(np.abs(self.matrices))
        if np.max(np.abs(sym)) > 1e-12 * scale:
            raise ValueError("table matrices are not symmetric")
        for d, mat in zip(self.grid, self.matrices):
            try:
                np.linalg.cholesky(mat)
            except np.linalg.LinAlgError as exc:
                raise ValueError(f"table matrix at d={d} is not positive definite") from exc

    def submatrix(self, p):
        """Table restricted to the first ``p`` scales."""
        if p > self.p:
            raise ValueError(f"table has only {self.p} scales")
        return GammaTable(p, self.grid, self.matrices[:, :p, :p], self.method, self.fingerprint)

    def to_text(self):
        iu = np.triu_indices(self.p)
        lines = [TABLE_HEADER, f"p={self.p} method={self.method} fingerprint={self.fingerprint}"]
        for d, mat in zip(self.grid, self.matrices):
            lines.append(" ".join([repr(float(d))] + [f"{v:.17g}" for v in mat[iu]]))
        return "\n".join(lines) + "\n"

    def save(self, path):
        Path(path).write_text(self.to_text())

    @classmethod
    def from_text(cls, text):
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines or lines[0].strip() != TABLE_HEADER:
            raise ValueError("not a gamma table (bad version line)")
        meta = dict(tok.split("=", 1) for tok in lines[1].split())
        try:
            p = int(meta["p"])
            method = meta["method"]
            fp = meta["fingerprint"]
        except KeyError as exc:
            raise ValueError(f"gamma table header lacks {exc}") from None
        iu = np.triu_indices(p)
        n_tri = p * (p + 1) // 2
        grid, mats = [], []
        for lineno, ln in enumerate(lines[2:], start=3):
            vals = np.array(ln.split(), dtype=float)
            if vals.size != n_tri + 1:
                raise ValueError(f"gamma table line {lineno}: expected {n_tri + 1} numbers")
            mat = np.zeros((p, p))
            mat[iu] = vals[1:]
            mat = mat + np.triu(mat, 1).T
            grid.append(vals[0])
            mats.append(mat)
        return cls(p, np.array(grid), np.array(mats), method, fp)

    @classmethod
    def load(cls, path):
        return cls.from_text(Path(path).read_text())


def default_grid(step=0.05):
    """Nodes ``-0.49, -0.45, ..., 1.20, 1.24`` for the default step."""
    inner = np.arange(-0.45, 1.2 + 1e-9, step)
    return np.unique(np.round(np.r_[D_TABLE_MIN, inner, D_TABLE_MAX], 10))


def _table_node(args):
    d, p, settings, method, empirical = args
    if method == "analytic":
        return gamma_matrix(d, p, settings)
    return gamma_empirical(d, p, **empirical)


def build_gamma_table(p, grid=None, settings=None, method="analytic", progress=None, workers=1,
                      **empirical):
    """Compute Gamma_p on ``grid`` (default: :func:`default_grid`).

    Grid nodes are independent; ``workers > 1`` computes them in
    separate processes.
    """
    if method not in ("analytic", "empirical"):
        raise ValueError(f"unknown table method {method!r}")
    settings = settings or QuadratureSettings()
    if grid is None:
        grid = default_grid()
    grid = np.asarray(grid, dtype=float)
    tasks = [(float(d), int(p), settings, method, empirical) for d in grid]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = pool.map(_table_node, tasks)
            mats = []
            for k, mat in enumerate(results):
                mats.append(mat)
                if progress:
                    progress(k, grid[k], mat)
    else:
        mats = []
        for k, task in enumerate(tasks):
            mats.append(_table_node(task))
            if progress:
                progress(k, grid[k], mats[-1])
    mats = np.array(mats)
    mats = 0.5 * (mats + np.swapaxes(mats, 1, 2))
    fp = settings.fingerprint() if method == "analytic" else hashlib.sha256(
        repr(sorted(empirical.items())).encode()
    ).hexdigest()[:16]
    return GammaTable(int(p), grid, mats, method, fp)


def _interpolator(table):
    if table._interp is None:
        iu = np.triu_indices(table.p)
        table._interp = PchipInterpolator(table.grid, table.matrices[:, iu[0], iu[1]], axis=0)
    return table._interp


def gamma_interp(table, d, return_flag=False):
    """Gamma_p(d) by entrywise monotone cubic interpolation.

    ``d`` outside the grid is clamped (warning, flag). The result is
    projected onto the positive-definite cone by flooring eigenvalues at
    ``1e-10 * trace / p``.
    """
    d = float(d)
    clamped = not (table.grid[0] <= d <= table.grid[-1])
    if clamped:
        warnings.warn(f"d={d} outside table range; clamped", ClampWarning, stacklevel=2)
        d = min(max(d, table.grid[0]), table.grid[-1])
    node = np.flatnonzero(table.grid == d)
    if node.size:
        mat = table.matrices[node[0]].copy()
    else:
        iu = np.triu_indices(table.p)
        mat = np.zeros((table.p, table.p))
        mat[iu] = _interpolator(table)(d)
        mat = mat + np.triu(mat, 1).T
        vals, vecs = np.linalg.eigh(mat)
        floor = 1e-10 * np.trace(mat) / table.p
        if np.any(vals < floor):
            vals = np.maximum(vals, floor)
            mat = (vecs * vals) @ vecs.T
            mat = 0.5 * (mat + mat.T)
        np.linalg.cholesky(mat)
    return (mat, clamped) if return_flag else mat


def sigma_hat(m, d_hat, table):
    """Plug-in covariance Lambda0'(d_hat)^-2 Gamma_p(d_hat) of the per-scale estimates.

    ``m`` is accepted for symmetry with the estimator's notation; the
    asymptotic matrix does not depend on it.
    """
    del m
    from .lambdas import D_MAX, D_MIN

    d_eval = min(max(float(d_hat), D_MIN), D_MAX)
    gam = gamma_interp(table, d_eval)
    return gam / lambda0_prime(min(max(d_eval, table.grid[0]), table.grid[-1])) ** 2


def sigma_p(d, table):
    """Asymptotic standard deviation of the GLS aggregate, (Lambda0'^-2 / (J' Gamma^-1 J))^(1/2)."""
    gam = gamma_interp(table, d)
    d_eval = min(max(float(d), table.grid[0]), table.grid[-1])
    chol = np.linalg.cholesky(gam)
    y = np.linalg.solve(chol, np.ones(table.p))
    return float(1.0 / (lambda0_prime(d_eval) * math.sqrt(y @ y)))


def gamma_empirical(d, p, n=100_000, reps=500, seed=0, alpha=0.3):
    """Monte Carlo estimate of Gamma_p(d) from ARFIMA(0, d, 0) paths.

    Returns the sample covariance of ``sqrt(N/m) * (IR_N(m), ..., IR_N(pm))``
    with ``m = floor(N^alpha)``.
    """
    model = ARFIMA(d)
    m = int(math.floor(n**alpha))
    seeds = np.random.SeedSequence(seed).spawn(reps)
    rows = np.empty((reps, p))
    for r, ss in enumerate(seeds):
        x = simulate(model, n, int(ss.generate_state(1, np.uint64)[0])).values
        rows[r] = ir_profile(x, m, p).values
    rows *= math.sqrt(n / m)
    cov = np.cov(rows, rowvar=False)
    return np.atleast_2d(cov)


def load_default_table(p):
    """The packaged analytic table restricted to ``p`` scales."""
    path = DATA_DIR / "gamma_p20.txt"
    key = (str(path), int(p))
    if key not in _CACHE:
        if not path.exists():
            raise FileNotFoundError(f"packaged gamma table missing: {path}")
        full = GammaTable.load(path)
        _CACHE[key] = full if p == full.p else full.submatrix(p)
    return _CACHE[key]


_CACHE = {}
