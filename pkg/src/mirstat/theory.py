"""Numerical checks of the spectral formulas behind the IR estimator.

The quadrature here resolves integrands of the form
``x^e g(x) sin^j(m x / 2) / sin^k(x / 2)`` on [0, pi]: panels of width
pi/m aligned with the zeros of sin(m x / 2), 16-point Gauss-Legendre
on each, and a Gauss-Jacobi rule with weight x^e on the first panel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate, special

from .lambdas import lam, lambda0, rho
from .sim import ARFIMA, FGN, PowerLawPlus, stationary_form

GL_ORDER = 16


@lru_cache(maxsize=None)
def _legendre():
    return np.polynomial.legendre.leggauss(GL_ORDER)


@lru_cache(maxsize=64)
def _jacobi(e):
    t, w = special.roots_jacobi(GL_ORDER, 0.0, e)
    # rule for int_0^1 s^e phi(s) ds
    return (1.0 + t) / 2.0, w / 2.0 ** (e + 1.0)


def _oscillatory_quad(terms, kernel, m):
    """Sum over ``terms`` of int_0^pi x^e g(x) kernel(x) dx.

    ``terms`` holds (e, g) pairs with e > -1 and g smooth on [0, pi].
    """
    width = math.pi / m
    edges = np.arange(width, math.pi, width)
    edges = np.r_[0.0, edges[edges < math.pi * (1 - 1e-12)], math.pi]
    lo, hi = edges[1:-1], edges[2:]
    t, w = _legendre()
    half = 0.5 * (hi - lo)
    x = (0.5 * (hi + lo))[:, None] + half[:, None] * t[None, :]
    first_w = edges[1]
    kx = kernel(x)
    total = 0.0
    for e, g in terms:
        body = float(np.sum(half[:, None] * w[None, :] * x**e * g(x) * kx))
        s, ws = _jacobi(float(e))
        xs = first_w * s
        head = first_w ** (e + 1.0) * float(np.sum(ws * g(xs) * kernel(xs)))
        total += head + body
    return total


def _one(x):
    return np.ones_like(x)


def j_integral(j, a, m):
    """J_j(a, m) = int_0^pi x^a sin^j(m x/2) / sin^4(x/2) dx for j in {4, 6}."""
    if j not in (4, 6):
        raise ValueError("j must be 4 or 6")
    if a <= -1:
        raise ValueError("a must exceed -1")
    if m < 1:
        raise ValueError("m must be at least 1")

    def kernel(x):
        return np.sin(m * x / 2.0) ** j / np.sin(x / 2.0) ** 4

    return _oscillatory_quad([(float(a), _one)], kernel, float(m))


# --------------------------------------------------------------------------
# closed-form integrals over (0, inf)


def _osc_tail(power, freqs, coefs, start=1.0):
    """int_start^inf y^power sum_k coef_k cos(freq_k y) dy (power < 0)."""
    total = 0.0
    for f, c in zip(freqs, coefs):
        if f == 0:
            total += c * -start ** (power + 1.0) / (power + 1.0)
        else:
            val, _ = integrate.quad(lambda y: y**power, start, np.inf, weight="cos", wvar=f, limlst=200)
            total += c * val
    return total


def _sin_power_integral(j, power, lam_=1.0):
    """int_0^inf sin^j(lam x) x^power dx via a cosine expansion of sin^j."""
    expansions = {
        1: None,
        2: ([0, 2], [0.5, -0.5]),
        4: ([0, 2, 4], [3 / 8, -4 / 8, 1 / 8]),
        6: ([0, 2, 4, 6], [10 / 32, -15 / 32, 6 / 32, -1 / 32]),
    }
    lam_ = abs(lam_)
    head, _ = integrate.quad(lambda x: math.sin(lam_ * x) ** j * x**power, 0.0, 1.0,
                             epsabs=0.0, epsrel=1e-13, limit=200)
    if j == 1:
        tail, _ = integrate.quad(lambda y: y**power, 1.0, np.inf, weight="sin", wvar=lam_, limlst=200)
    else:
        freqs, coefs = expansions[j]
        tail = _osc_tail(power, [f * lam_ for f in freqs], coefs)
    return head + tail


def integral_identities(item, s, lam_=1.0):
    """Each member of a closed-form chain, computed independently.

    item 1: s = a in (0, 2); item 2: s = b in (-1, 1); item 3: s = b in (1, 3).
    The last entry of the returned tuple is the closed form.
    """
    lam_ = abs(float(lam_))
    if item == 1:
        a = s
        if not 0 < a < 2:
            raise ValueError("item 1 needs a in (0, 2)")
        e1 = 2.0 / lam_ ** (a - 1.0) * _sin_power_integral(1, -a, lam_)
        e2 = 4.0 * a / (2.0**a * lam_**a) * _sin_power_integral(2, -a - 1.0, lam_)
        closed = math.pi / (math.gamma(a) * math.sin(a * math.pi / 2.0))
        return e1, e2, closed
    b = s
    if item == 2:
        if not -1 < b < 1:
            raise ValueError("item 2 needs b in (-1, 1)")
        c4 = 1.0 / (2.0 ** (1.0 - b) - 1.0)
        c6 = 16.0 / (-15.0 + 6.0 * 2.0 ** (3.0 - b) - 3.0 ** (3.0 - b))
        sin_arg = (1.0 - b) * math.pi / 2.0
    elif item == 3:
        if not 1 < b < 3:
            raise ValueError("item 3 needs b in (1, 3)")
        c4 = 1.0 / (1.0 - 2.0 ** (1.0 - b))
        c6 = 16.0 / (15.0 - 6.0 * 2.0 ** (3.0 - b) + 3.0 ** (3.0 - b))
        sin_arg = (3.0 - b) * math.pi / 2.0
    else:
        raise ValueError("item must be 1, 2 or 3")
    e1 = c4 * _sin_power_integral(4, b - 4.0, lam_)
    e2 = c6 * _sin_power_integral(6, b - 4.0, lam_)
    closed = 2.0 ** (3.0 - b) * lam_ ** (3.0 - b) * math.pi / (4.0 * math.gamma(4.0 - b) * math.sin(sin_arg))
    return e1, e2, closed


def chain_error(values):
    """Largest relative deviation from the closed form (last entry)."""
    ref = values[-1]
    return max(abs(v - ref) / abs(ref) for v in values[:-1])


# --------------------------------------------------------------------------
# expansion constants of J_j(a, m)


def _c41(a):
    return 4.0 * math.pi * (1.0 - 2.0 ** (3.0 - a) / 4.0) / (
        (3.0 - a) * math.gamma(3.0 - a) * math.sin((3.0 - a) * math.pi / 2.0))


def _c61(a):
    return math.pi * (15.0 - 6.0 * 2.0 ** (3.0 - a) + 3.0 ** (3.0 - a)) / (
        4.0 * (3.0 - a) * math.gamma(3.0 - a) * math.sin((3.0 - a) * math.pi / 2.0))


def _head(j, a):
    val, _ = integrate.quad(lambda y: math.sin(y / 2.0) ** j * y ** (a - 4.0), 0.0, 1.0,
                            epsabs=0.0, epsrel=1e-13, limit=200)
    return 16.0 * val


def _c41_prime(a):
    tail = _osc_tail(a - 4.0, [1.0, 2.0], [-4.0, 1.0])
    return 6.0 / (3.0 - a) + _head(4, a) + 2.0 * tail


def _c61_prime(a):
    tail = _osc_tail(a - 4.0, [1.0, 2.0, 3.0], [-15.0, 6.0, -1.0])
    return _head(6, a) + 5.0 / (3.0 - a) + 0.5 * tail


def _c_second(a, factor):
    val, _ = integrate.quad(lambda x: x**a / math.sin(x / 2.0) ** 4, 0.0, math.pi,
                            epsabs=0.0, epsrel=1e-12, limit=200)
    return factor * val


_CONSTANTS = {
    "C41": (lambda a: -1 < a < 1, _c41),
    "C61": (lambda a: -1 < a < 1, _c61),
    "C41'": (lambda a: 1 <= a < 3, _c41_prime),
    "C61'": (lambda a: 1 <= a < 3, _c61_prime),
    "C42'": (lambda a: a in (1, 3), lambda a: 6.0 if a == 3 else 1.0),
    "C62'": (lambda a: a in (1, 3), lambda a: 5.0 if a == 3 else 5.0 / 6.0),
    "C41''": (lambda a: a > 3, lambda a: _c_second(a, 3.0 / 8.0)),
    "C61''": (lambda a: a > 3, lambda a: _c_second(a, 5.0 / 16.0)),
}


def expansion_constant(name, a):
    """One leading-order constant of the large-m expansion of J_j(a, m)."""
    try:
        defined, func = _CONSTANTS[name]
    except KeyError:
        raise ValueError(f"unknown constant {name!r}") from None
    if not defined(a):
        raise ValueError(f"{name} is not defined at a={a}")
    val = func(a)
    if val == 0 or not math.isfinite(val):
        raise ArithmeticError(f"{name}({a}) vanished or overflowed")
    return val


def expansion_constants(a):
    """All constants defined at ``a``, keyed by name."""
    a = float(a)
    if a <= -1:
        raise ValueError("a must exceed -1")
    return {name: expansion_constant(name, a) for name, (defined, _) in _CONSTANTS.items() if defined(a)}


def leading_order(j, a, m):
    """Leading term of J_j(a, m) for large m."""
    if -1 < a < 1:
        return expansion_constant(f"C{j}1", a) * m ** (3.0 - a)
    if 1 <= a < 3:
        return expansion_constant(f"C{j}1'", a) * m ** (3.0 - a)
    if a == 3:
        return expansion_constant(f"C{j}2'", a) * math.log(m)
    return expansion_constant(f"C{j}1''", a)


def log_slope(j, a, m1, m2):
    """(J_j(a, m2) - J_j(a, m1)) / log(m2 / m1); tends to C'_j2(3) at a = 3."""
    return (j_integral(j, a, m2) - j_integral(j, a, m1)) / math.log(m2 / m1)


# --------------------------------------------------------------------------
# finite-m expectation of IR


def _density_terms(model):
    """(e, g) pairs with f_U(x) = sum x^e g(x) for the stationary increment form.

    Also returns the number of integrations linking the model to it.
    """
    base, n_int = stationary_form(model)
    if isinstance(base, PowerLawPlus):
        terms = [(-a, (lambda c: lambda x: np.full_like(x, c))(coef)) for coef, a in base.power_terms()]
    elif isinstance(base, ARFIMA):
        e = -2.0 * base.d
        terms = [(e, lambda x: base.spectral_density(x) * x ** (-e))]
    elif isinstance(base, FGN):
        e = 1.0 - 2.0 * base.hurst
        terms = [(e, lambda x: base.spectral_density(x) * x ** (-e))]
    else:
        raise TypeError(f"unsupported model {model!r}")
    return terms, n_int


def _moment_integrals(model, m, form):
    terms, n_int = _density_terms(model)
    if form == "auto":
        form = "increment" if n_int else "level"
    if form == "level":
        if n_int:
            raise ValueError("level form needs a stationary model")
        den = 2

        def k_for(j):
            return lambda x: np.sin(m * x / 2.0) ** j / np.sin(x / 2.0) ** den
    elif form == "increment":
        if n_int:
            inc_terms = terms
        else:
            # f_U = 4 sin^2(x/2) f_X
            inc_terms = [(e, (lambda gg: lambda x: 4.0 * np.sin(x / 2.0) ** 2 * gg(x))(g)) for e, g in terms]
        terms = inc_terms

        def k_for(j):
            return lambda x: np.sin(m * x / 2.0) ** j / (4.0 * np.sin(x / 2.0) ** 4)
    else:
        raise ValueError(f"unknown form {form!r}")
    i4 = _oscillatory_quad(terms, k_for(4), float(m))
    i6 = _oscillatory_quad(terms, k_for(6), float(m))
    return i4, i6


def rm_vm_ratio(model, m, form="auto"):
    """Correlation 1 - 2 I6/I4 of consecutive aggregated increments at scale m.

    ``form='level'`` integrates f_X / sin^2 (stationary models only);
    ``form='increment'`` integrates the differenced density over sin^4.
    The two agree for stationary models.
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    i4, i6 = _moment_integrals(model, m, form)
    if not (math.isfinite(i4) and math.isfinite(i6)) or i4 <= 0:
        raise ArithmeticError("quadrature failed")
    return 1.0 - 2.0 * i6 / i4


def expected_ir(model, m, form="auto"):
    """E[IR_N(m)] = Lambda(R_m / V_m^2), exact for every m."""
    return lam(min(max(rm_vm_ratio(model, m, form), -1.0), 1.0))


# --------------------------------------------------------------------------
# bias rates


def model_beta(model):
    """Second-order exponent beta of the generalized density at 0."""
    if isinstance(model, PowerLawPlus) and model.c1 > 0:
        return float(model.beta)
    if isinstance(model, FGN):
        return min(2.0, 2.0 * model.hurst + 1.0)
    return 2.0


def regime(d, beta):
    """Which bias regime (d, beta) falls in."""
    if beta < 2 * d - 1:
        return "beta<2d-1"
    if beta == 2 * d - 1:
        return "beta=2d-1"
    if beta < 2 * d + 1:
        return "2d-1<beta<2d+1"
    if beta == 2 * d + 1:
        return "beta=2d+1"
    return "beta>2d+1"


def _second_order(model):
    """(c1 / c0) of f(x) = c0 x^-2d + c1 x^(-2d+beta) + ..., when known."""
    if isinstance(model, PowerLawPlus):
        return model.c1 if model.c1 > 0 else None
    if isinstance(model, ARFIMA) and not model.ar and not model.ma:
        # |2 sin(x/2)|^(-2d) = x^(-2d) (1 + d x^2 / 12 + ...)
        return model.d / 12.0
    return None


def predicted_bias_constant(model):
    """K(d, beta) in E[IR] - Lambda0(d) ~ K m^-beta, or None if not available."""
    d = model.memory
    beta = model_beta(model)
    ratio = _second_order(model)
    # at beta = 2 the kernel's own m^-2 correction enters at the same order
    if ratio is None or d < 0.5 or beta >= 2:
        return None
    a = 2.0 - 2.0 * d
    tag = regime(d, beta)
    c41, c61 = _c41(a), _c61(a)
    b = a + beta
    if tag == "beta<2d-1":
        c4b, c6b = _c41(b), _c61(b)
    elif tag == "beta=2d-1":
        c4b, c6b = _c41_prime(1.0), _c61_prime(1.0)
    elif tag == "2d-1<beta<2d+1":
        c4b, c6b = _c41_prime(b), _c61_prime(b)
    else:
        return None
    c_ell = 2.0 * ratio / c41**2 * (c61 * c4b - c6b * c41)
    r0 = rho(d)
    h = 1e-6
    dlam = (lam(r0 + h) - lam(r0 - h)) / (2 * h)
    return dlam * c_ell


@dataclass(frozen=True)
class ExpansionReport:
    """Fit of log|E[IR_N(m)] - Lambda0(d)| against log m."""

    d: float
    beta: float
    m_grid: np.ndarray
    expected: np.ndarray
    bias: np.ndarray
    slope: float
    constant: float
    predicted_slope: float
    predicted_constant: float | None
    regime: str
    flags: frozenset = field(default_factory=frozenset)


def bias_rate_check(model, m_grid=None, beta=None):
    """Fit the decay of E[IR_N(m)] - Lambda0(d) over the last decade of ``m_grid``."""
    if m_grid is None:
        m_grid = np.geomspace(100, 3200, 11)
    m_grid = np.asarray(sorted(float(m) for m in m_grid))
    if m_grid.size < 4 or m_grid[-1] / m_grid[0] < 10 * (1 - 1e-12):
        raise ValueError("m grid needs at least 4 points spanning a decade")
    d = float(model.memory)
    beta = model_beta(model) if beta is None else float(beta)
    expected = np.array([expected_ir(model, m) for m in m_grid])
    bias = expected - lambda0(d)
    flags = set()
    fit_mask = m_grid >= m_grid[-1] / 10.0 * (1 - 1e-12)
    if np.any(np.abs(bias[fit_mask]) < 1e-12):
        flags.add("bias numerically zero")
        slope, const = float("nan"), 0.0
    else:
        slope, icept = np.polyfit(np.log(m_grid[fit_mask]), np.log(np.abs(bias[fit_mask])), 1)
        sign = np.sign(bias[fit_mask][-1])
        const = float(sign * math.exp(icept))
    if np.any(np.diff(np.sign(bias[fit_mask])) != 0):
        flags.add("bias changes sign")
    return ExpansionReport(
        d=d,
        beta=beta,
        m_grid=m_grid,
        expected=expected,
        bias=bias,
        slope=float(slope),
        constant=const,
        predicted_slope=-min(beta, 2 * d + 1),
        predicted_constant=predicted_bias_constant(model),
        regime=regime(d, beta),
        flags=frozenset(flags),
    )


# --------------------------------------------------------------------------
# verification table


@dataclass(frozen=True)
class Check:
    name: str
    error: float
    tolerance: float

    @property
    def passed(self):
        return bool(np.isfinite(self.error) and self.error <= self.tolerance)


def _rel(x, ref):
    return abs(x - ref) / abs(ref)


def verification_checks():
    """Run every identity check; returns a list of :class:`Check`."""
    from .asymcov import z_cov

    checks = [
        Check("rho(0) = -0.5", abs(rho(0.0) + 0.5), 1e-15),
        Check("rho(1) = 0.25", abs(rho(1.0) - 0.25), 1e-15),
        Check("rho continuous at 0.5",
              max(abs(rho(0.5 + s) - rho(0.5)) for s in (-1e-7, 1e-7)), 1e-5),
    ]
    zc = 0.0
    for d in np.r_[np.linspace(-0.45, 0.45, 10), np.linspace(0.55, 1.45, 10)]:
        c = z_cov(d, 1, 1, 0.0, 1.0) / z_cov(d, 1, 1, 0.0, 0.0)
        zc = max(zc, abs(c - rho(d)))
    checks.append(Check("corr(Z1(0), Z1(1)) = rho(d)", zc, 1e-9))

    for item, values in ((1, (0.5, 1.0, 1.5)), (2, (-0.5, 0.0, 0.5)), (3, (1.5, 2.0, 2.5))):
        for s in values:
            for lam_ in (0.7, 2.0):
                err = chain_error(integral_identities(item, s, lam_))
                checks.append(Check(f"closed-form chain {item} at s={s:g}, lambda={lam_:g}", err, 1e-6))

    for a in (-0.5, 0.0, 0.5):
        for j in (4, 6):
            err = _rel(j_integral(j, a, 1e4) * 1e4 ** (a - 3.0), expansion_constant(f"C{j}1", a))
            checks.append(Check(f"J{j}({a:g}, m) m^(a-3) -> C{j}1 at m=1e4", err, 1e-2))
    for j in (4, 6):
        err = _rel(log_slope(j, 3.0, 1e4, 1e5), expansion_constant(f"C{j}2'", 3.0))
        checks.append(Check(f"dJ{j}(3, m)/dlog m -> C{j}2'(3)", err, 5e-2))
    for d in (0.6, 0.8, 1.0, 1.2):
        a = 2.0 - 2.0 * d
        r = 1.0 - 2.0 * j_integral(6, a, 1e3) / j_integral(4, a, 1e3)
        checks.append(Check(f"1 - 2 J6/J4 -> rho({d:g}) at m=1e3", abs(r - rho(d)), 1e-3))
        r = 1.0 - 2.0 * expansion_constant("C61", a) / expansion_constant("C41", a)
        checks.append(Check(f"1 - 2 C61/C41 = rho({d:g})", abs(r - rho(d)), 1e-9))

    model = ARFIMA(0.3, ar=(-0.5,))
    err = abs(rm_vm_ratio(model, 30, "level") - rm_vm_ratio(model, 30, "increment"))
    checks.append(Check("level and increment forms agree", err, 1e-10))
    for model in (ARFIMA(0.3), ARFIMA(1.1), FGN(0.8), PowerLawPlus(0.2, 5.0, 1.5)):
        err = abs(expected_ir(model, 1e4) - lambda0(model.memory))
        checks.append(Check(f"E[IR] -> Lambda0 for {model}", err, 1e-3))

    for model, beta, tol in ((PowerLawPlus(0.8, 5.0, 0.5), 0.5, 0.15), (ARFIMA(0.9), 2.0, 0.3)):
        rep = bias_rate_check(model, np.geomspace(100, 3200, 11))
        checks.append(Check(f"bias slope for {model}", abs(rep.slope + beta), tol))
    return checks


def format_checks(checks):
    """Fixed-width pass/fail table."""
    width = max(len(c.name) for c in checks)
    lines = [f"{'check':<{width}}  {'error':>10}  {'tol':>8}  result"]
    for c in checks:
        lines.append(f"{c.name:<{width}}  {c.error:10.3e}  {c.tolerance:8.1e}  {'PASS' if c.passed else 'FAIL'}")
    n_fail = sum(not c.passed for c in checks)
    lines.append(f"{len(checks) - n_fail}/{len(checks)} passed")
    return "\n".join(lines)
