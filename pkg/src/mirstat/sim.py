"""Exact Gaussian simulation of I(d) processes by circulant embedding.

Spectral convention: ``gamma(k) = int_{-pi}^{pi} f(lam) cos(k lam) dlam``
with unit-variance white noise having ``f = 1 / (2 pi)``.

Models with ``d >= 0.5`` are simulated as the cumulative sum of the same
model family with memory parameter ``d - 1``.
"""

from __future__ import annotations

import logging
import math
import re
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate, special

from ._validation import check_series

logger = logging.getLogger(__name__)

EIG_REL_TOL = 1e-8


class EmbeddingWarning(UserWarning):
    """Circulant embedding needed eigenvalue clipping."""


# --------------------------------------------------------------------------
# models


def _num(v):
    """Shortest text that parses back to the same float."""
    return repr(float(v)).removesuffix(".0")


@dataclass(frozen=True)
class ARFIMA:
    """ARFIMA(P, d, Q): ``(1 + sum ar_k B^k)(1 - B)^d X = (1 + sum ma_k B^k) eps``.

    Coefficients enter with a plus sign, so ``ar=(-0.5,)`` is the AR(1)
    recursion ``X_t = 0.5 X_{t-1} + eps_t``.
    """

    d: float
    ar: tuple = ()
    ma: tuple = ()
    sigma2: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "ar", tuple(float(c) for c in self.ar))
        object.__setattr__(self, "ma", tuple(float(c) for c in self.ma))
        # -0.5 itself is reachable as the increment model of d = 0.5
        if not -0.5 <= self.d < 1.5:
            raise ValueError(f"ARFIMA d must lie in [-0.5, 1.5), got {self.d}")
        if self.sigma2 <= 0:
            raise ValueError("innovation variance must be positive")
        if self.ar:
            roots = np.roots(np.r_[self.ar[::-1], 1.0])
            if np.any(np.abs(roots) <= 1.0 + 1e-10):
                raise ValueError("AR polynomial has a root on or inside the unit circle")

    @property
    def memory(self):
        return self.d

    def with_memory(self, d):
        return ARFIMA(d, self.ar, self.ma, self.sigma2)

    def spectral_density(self, lam):
        lam = np.asarray(lam, dtype=float)
        z = np.exp(-1j * lam)
        num = np.abs(np.polyval(np.r_[self.ma[::-1], 1.0], z)) ** 2
        den = np.abs(np.polyval(np.r_[self.ar[::-1], 1.0], z)) ** 2
        with np.errstate(divide="ignore"):
            frac = np.abs(2.0 * np.sin(lam / 2.0)) ** (-2.0 * self.d)
        return self.sigma2 / (2.0 * np.pi) * num / den * frac

    def __str__(self):
        parts = [f"d={_num(self.d)}"]
        if self.ar:
            parts.append("ar=[" + ",".join(_num(c) for c in self.ar) + "]")
        if self.ma:
            parts.append("ma=[" + ",".join(_num(c) for c in self.ma) + "]")
        if self.sigma2 != 1.0:
            parts.append(f"var={_num(self.sigma2)}")
        return "arfima(" + ",".join(parts) + ")"


@dataclass(frozen=True)
class FGN:
    """Fractional Gaussian noise with Hurst index ``hurst`` (unit variance)."""

    hurst: float

    def __post_init__(self):
        if not 0.0 < self.hurst < 1.0:
            raise ValueError(f"Hurst index must lie in (0, 1), got {self.hurst}")

    @property
    def memory(self):
        return self.hurst - 0.5

    def spectral_density(self, lam, n_terms=200):
        # aliased power-law series; only used by the theory checks
        lam = np.abs(np.asarray(lam, dtype=float))
        shape = lam.shape
        lam = lam.ravel()
        h = self.hurst
        c = math.gamma(2 * h + 1) * math.sin(math.pi * h) / (2 * math.pi)
        k = np.arange(-n_terms, n_terms + 1)
        with np.errstate(divide="ignore"):
            s = np.sum(np.abs(2 * np.pi * k[:, None] + lam[None, :]) ** (-2 * h - 1), axis=0)
        # midpoint-rule estimate of the two tails |k| > n_terms
        s += 2.0 * (2 * np.pi) ** (-2 * h - 1) * (n_terms + 0.5) ** (-2 * h) / (2 * h)
        return (c * 2.0 * (1.0 - np.cos(lam)) * s).reshape(shape)

    def __str__(self):
        return f"fgn(h={_num(self.hurst)})"


@dataclass(frozen=True)
class PowerLawPlus:
    """Density ``|lam|^(-2d) (1 + c1 |lam|^beta)`` on [-pi, pi]."""

    d: float
    c1: float = 5.0
    beta: float = 0.5

    def __post_init__(self):
        if not -0.5 <= self.d < 1.5:
            raise ValueError(f"PowerLawPlus d must lie in [-0.5, 1.5), got {self.d}")
        if self.c1 < 0:
            raise ValueError("c1 must be nonnegative")
        if self.beta <= 0:
            raise ValueError("beta must be positive")

    @property
    def memory(self):
        return self.d

    def with_memory(self, d):
        return PowerLawPlus(d, self.c1, self.beta)

    def spectral_density(self, lam):
        a = np.abs(np.asarray(lam, dtype=float))
        with np.errstate(divide="ignore"):
            return a ** (-2.0 * self.d) * (1.0 + self.c1 * a**self.beta)

    def power_terms(self):
        """(coefficient, exponent a) pairs with f = sum coef * |lam|^(-a)."""
        terms = [(1.0, 2.0 * self.d)]
        if self.c1 > 0:
            terms.append((self.c1, 2.0 * self.d - self.beta))
        return terms

    def __str__(self):
        return f"powerlaw(d={_num(self.d)},c1={_num(self.c1)},beta={_num(self.beta)})"


def stationary_form(model):
    """Return ``(stationary_model, n_integrations)``.

    For ``d >= 0.5`` the same family with memory ``d - 1`` is returned
    together with one integration step.
    """
    if isinstance(model, FGN):
        return model, 0
    if model.d >= 0.5:
        return model.with_memory(model.d - 1.0), 1
    return model, 0


@dataclass(frozen=True)
class SeriesSample:
    """A finite real trajectory with optional provenance."""

    values: np.ndarray
    model: object = None
    seed: int | None = None
    info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "values", check_series(self.values, min_length=1, name="values"))

    def __len__(self):
        return self.values.size

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)


# --------------------------------------------------------------------------
# autocovariances


def _fi_autocov(d, maxlag, sigma2=1.0):
    """ARFIMA(0, d, 0) autocovariances for d in [-0.5, 0.5)."""
    g = np.empty(maxlag + 1)
    g[0] = sigma2 * math.exp(special.gammaln(1 - 2 * d) - 2 * special.gammaln(1 - d))
    if maxlag:
        k = np.arange(1, maxlag + 1)
        g[1:] = g[0] * np.cumprod((k - 1 + d) / (k - d))
    return g


def _arma_weights(ar, ma, tol=1e-17):
    """Impulse response of (1 + sum ma B^k) / (1 + sum ar B^k), truncated."""
    if ar:
        rmin = np.min(np.abs(np.roots(np.r_[ar[::-1], 1.0])))
        length = int(math.ceil(math.log(tol) / -math.log(rmin))) + len(ma) + 8
        length = min(max(length, 16), 200_000)
    else:
        length = len(ma) + 1
    psi = np.zeros(length)
    theta = np.r_[1.0, ma]
    for t in range(length):
        acc = theta[t] if t < theta.size else 0.0
        for k, a in enumerate(ar, start=1):
            if t - k >= 0:
                acc -= a * psi[t - k]
        psi[t] = acc
    return psi


def _power_cos_small(a, k):
    """2 int_0^pi lam^(-a) cos(k lam) dlam by QUADPACK, split near 0."""
    if k == 0:
        return 2.0 * math.pi ** (1.0 - a) / (1.0 - a)
    cut = min(math.pi, 1.0 / k)
    head, _ = integrate.quad(
        lambda u: math.cos(k * u), 0.0, cut, weight="alg", wvar=(-a, 0.0),
        epsabs=1e-13, epsrel=1e-12, limit=200,
    )
    tail = 0.0
    if cut < math.pi:
        tail, _ = integrate.quad(
            lambda u: u ** (-a), cut, math.pi, weight="cos", wvar=float(k),
            epsabs=1e-13, epsrel=1e-12, limit=400,
        )
    return 2.0 * (head + tail)


def _power_cos_large(a, k):
    """Asymptotic branch for k*pi >= 60 via the upper incomplete gamma series."""
    k = np.asarray(k, dtype=float)
    x = k * math.pi
    total = np.ones_like(x, dtype=complex)
    term = np.ones_like(x, dtype=complex)
    for n in range(200):
        term = term * (a + n) * (-1j) / x
        total = total + term
        if np.max(np.abs(term)) < 1e-18:
            break
    upper = 1j * x ** (-a) * np.exp(1j * x) * total
    whole = special.gamma(1.0 - a) * math.sin(math.pi * a / 2.0)
    inner = whole - upper.real
    return 2.0 * k ** (a - 1.0) * inner


def power_cos_coefficients(a, maxlag):
    """``2 int_0^pi lam^(-a) cos(k lam) dlam`` for k = 0..maxlag (a < 1)."""
    if a >= 1:
        raise ValueError(f"|lam|^(-{a}) is not integrable at 0")
    out = np.empty(maxlag + 1)
    k_switch = int(math.ceil(60.0 / math.pi))
    small = min(maxlag, k_switch - 1)
    for k in range(small + 1):
        out[k] = _power_cos_small(a, k)
    if maxlag >= k_switch:
        out[k_switch:] = _power_cos_large(a, np.arange(k_switch, maxlag + 1))
    return out


def autocovariance_quadrature(density, k, singular_exponent=0.0, rtol=1e-11):
    """Adaptive quadrature of ``int f(lam) cos(k lam)`` for an even density.

    ``density`` may be singular at 0 like ``lam^(-singular_exponent)``;
    the neighbourhood of 0 is integrated with the algebraic weight and the
    rest with QUADPACK's cosine weight.
    """
    a = float(singular_exponent)
    cut = min(math.pi, 1.0 / max(k, 1))

    def smooth(u):
        return float(density(u)) * u**a if u > 0 else 0.0

    head, _ = integrate.quad(
        lambda u: smooth(u) * math.cos(k * u), 0.0, cut, weight="alg", wvar=(-a, 0.0),
        epsabs=0.0, epsrel=rtol, limit=200,
    )
    tail, _ = integrate.quad(
        lambda u: float(density(u)), cut, math.pi, weight="cos", wvar=float(k),
        epsabs=0.0, epsrel=rtol, limit=400,
    )
    return 2.0 * (head + tail)


def autocovariance(model, maxlag):
    """gamma(0..maxlag) of a stationary model (memory < 0.5)."""
    maxlag = int(maxlag)
    if maxlag < 0:
        raise ValueError("maxlag must be nonnegative")
    if isinstance(model, FGN):
        k = np.arange(maxlag + 1, dtype=float)
        h2 = 2.0 * model.hurst
        return 0.5 * (np.abs(k + 1) ** h2 + np.abs(k - 1) ** h2 - 2 * k**h2)
    if model.d >= 0.5:
        raise ValueError(f"density not integrable: d={model.d} >= 0.5 in stationary position")
    if isinstance(model, ARFIMA):
        if not model.ar and not model.ma:
            return _fi_autocov(model.d, maxlag, model.sigma2)
        psi = _arma_weights(model.ar, model.ma)
        w = np.correlate(psi, psi, mode="full")  # lags -(L-1)..(L-1)
        half = psi.size - 1
        base = _fi_autocov(model.d, maxlag + half, model.sigma2)
        lags = np.arange(-half, maxlag + half + 1)
        full = base[np.abs(lags)]
        out = np.convolve(full, w, mode="valid")
        return out[: maxlag + 1]
    if isinstance(model, PowerLawPlus):
        g = np.zeros(maxlag + 1)
        for coef, a in model.power_terms():
            g += coef * power_cos_coefficients(a, maxlag)
        return g
    raise TypeError(f"unsupported model {model!r}")


# --------------------------------------------------------------------------
# circulant embedding


@lru_cache(maxsize=64)
def _embedding(model, n):
    size = 1 << int(math.ceil(math.log2(2 * n)))
    limit = max(size, 1 << int(math.ceil(math.log2(8 * n))))
    while True:
        half = size // 2
        g = autocovariance(model, half)
        c = np.concatenate([g, g[-2:0:-1]])
        eig = np.fft.fft(c).real
        floor = -EIG_REL_TOL * eig.max()
        if eig.min() >= floor:
            clipped = 0.0
            break
        if size >= limit:
            neg = eig < 0
            clipped = float(-eig[neg].sum() / np.abs(eig).sum())
            msg = (
                f"circulant embedding of {model} (N={n}, size={size}) has negative "
                f"eigenvalues; clipped {clipped:.3g} of the spectral mass"
            )
            logger.warning(msg)
            warnings.warn(msg, EmbeddingWarning, stacklevel=3)
            break
        size *= 2
    eig = np.clip(eig, 0.0, None)
    eig.setflags(write=False)
    return np.sqrt(eig / size), size, clipped


def simulate(model, n, seed):
    """Draw one path of length ``n`` from ``model``.

    Deterministic in ``(model, n, seed)``. Integrated models (d >= 0.5)
    return the partial sums of the stationary increment path.
    """
    n = int(n)
    if n < 2:
        raise ValueError("N must be at least 2")
    base, n_int = stationary_form(model)
    scale, size, clipped = _embedding(base, n)
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(size) + 1j * rng.standard_normal(size)
    x = np.fft.fft(scale * z).real[:n]
    for _ in range(n_int):
        x = np.cumsum(x)
    info = {"embedding_size": size, "clipped_mass": clipped}
    return SeriesSample(x, model=model, seed=seed, info=info)


# --------------------------------------------------------------------------
# model mini-grammar:  arfima(d=0.3,ar=[-0.5],ma=[0.7],var=1) | fgn(h=0.7) |
#                      powerlaw(d=0.2,c1=5,beta=0.5)


class ModelSyntaxError(ValueError):
    def __init__(self, text, pos, msg):
        self.text, self.pos = text, pos
        super().__init__(f"{msg} at position {pos}: {text!r}")


_TOKEN = re.compile(r"\s*(?:(?P<num>[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<sym>[()\[\],=]))")

_FAMILIES = {
    "arfima": ({"d"}, {"d", "ar", "ma", "var"}),
    "fgn": ({"h"}, {"h"}),
    "powerlaw": ({"d"}, {"d", "c1", "beta"}),
}


def _tokenize(text):
    pos = 0
    out = []
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m:
            raise ModelSyntaxError(text, pos, "unexpected character")
        kind = m.lastgroup
        start = m.start(kind)
        out.append((kind, m.group(kind), start))
        pos = m.end()
    out.append(("end", "", len(text)))
    return out


def parse_model(text):
    """Parse the model mini-grammar into a model instance."""
    toks = _tokenize(text)
    i = 0

    def expect(kind, value=None):
        nonlocal i
        k, v, p = toks[i]
        if k != kind or (value is not None and v != value):
            want = value if value is not None else kind
            raise ModelSyntaxError(text, p, f"expected {want!r}, found {v or 'end of input'!r}")
        i += 1
        return v, p

    family, fpos = expect("name")
    family = family.lower()
    if family not in _FAMILIES:
        raise ModelSyntaxError(text, fpos, f"unknown model family {family!r}")
    required, allowed = _FAMILIES[family]
    expect("sym", "(")
    args = {}
    while toks[i][1] != ")":
        key, kpos = expect("name")
        if key not in allowed:
            raise ModelSyntaxError(text, kpos, f"unknown parameter {key!r} for {family}")
        if key in args:
            raise ModelSyntaxError(text, kpos, f"duplicate parameter {key!r}")
        expect("sym", "=")
        if toks[i][1] == "[":
            i += 1
            vals = []
            while toks[i][1] != "]":
                v, _ = expect("num")
                vals.append(float(v))
                if toks[i][1] == ",":
                    i += 1
                elif toks[i][1] != "]":
                    raise ModelSyntaxError(text, toks[i][2], "expected ',' or ']'")
            i += 1
            args[key] = tuple(vals)
        else:
            v, _ = expect("num")
            args[key] = float(v)
        if toks[i][1] == ",":
            i += 1
        elif toks[i][1] != ")":
            raise ModelSyntaxError(text, toks[i][2], "expected ',' or ')'")
    i += 1
    expect("end")
    missing = required - set(args)
    if missing:
        raise ModelSyntaxError(text, len(text), f"missing parameter(s) {sorted(missing)}")
    for key, val in args.items():
        if isinstance(val, tuple) and key not in ("ar", "ma"):
            raise ModelSyntaxError(text, text.find(key), f"parameter {key!r} must be a number")
        if not isinstance(val, tuple) and key in ("ar", "ma"):
            args[key] = (val,)
    if family == "arfima":
        return ARFIMA(args["d"], args.get("ar", ()), args.get("ma", ()), args.get("var", 1.0))
    if family == "fgn":
        return FGN(args["h"])
    return PowerLawPlus(args["d"], args.get("c1", 5.0), args.get("beta", 0.5))
