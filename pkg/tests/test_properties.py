import math

import numpy as np
from hypothesis import HealthCheck, example, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mirstat.asymcov import z_cov
from mirstat.bench import ResultRow, ResultTable, emit, parse_csv
from mirstat.estimator import gls_estimate
from mirstat.ir import ir_single, ir_single_naive
from mirstat.lambdas import D_MAX, D_MIN, lam, lambda0, lambda0_inverse, rho
from mirstat.sim import ARFIMA, FGN, PowerLawPlus, parse_model

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
series = st.integers(8, 120).flatmap(lambda n: arrays(np.float64, n, elements=finite))
fast = settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])


@fast
@given(st.integers(0, 2**32 - 1), st.integers(8, 150), st.integers(0, 2), st.floats(-6, 6), finite,
       st.integers(1, 6))
def test_fast_ir_matches_naive(seed, n, order, log_scale, shift, ell):
    if n <= 3 * ell:
        return
    x = np.random.default_rng(seed).standard_normal(n)
    for _ in range(order):
        x = np.cumsum(x)
    x = 10.0**log_scale * x + shift
    a, b = ir_single(x, ell), ir_single_naive(x, ell)
    assert 0.0 <= a <= 1.0
    assert math.isclose(a, b, rel_tol=1e-9, abs_tol=1e-12)


@fast
@given(series, st.integers(1, 6))
def test_ir_in_unit_interval(x, ell):
    if x.size > 3 * ell:
        assert 0.0 <= ir_single(x, ell) <= 1.0


@fast
@given(st.integers(0, 2**32 - 1), st.floats(0.01, 100), st.floats(-100, 100), st.integers(1, 5))
def test_ir_affine_invariance(seed, a, b, ell):
    x = np.random.default_rng(seed).standard_normal(80)
    assert math.isclose(ir_single(a * x + b, ell), ir_single(x, ell), rel_tol=1e-9)


@fast
@given(st.floats(-1, 1), st.floats(-1, 1))
def test_lam_monotone_and_bounded(r1, r2):
    lo, hi = sorted((r1, r2))
    assert 0.0 <= lam(lo) <= lam(hi) <= 1.0


@fast
@given(st.floats(D_MIN, D_MAX))
@example(0.5)
@example(0.5 + 1e-9)
def test_lambda0_round_trip(d):
    assert abs(lambda0_inverse(lambda0(d)) - d) < 1e-8


@fast
@given(st.floats(-0.49, 1.49))
def test_rho_is_a_correlation(d):
    assert -1.0 < rho(d) < 1.0


@fast
@given(arrays(np.float64, 4, elements=st.floats(-1, 1.4)), st.floats(-1, 1), st.floats(0.1, 10))
def test_gls_affine_equivariance(dhat, shift, scale):
    rng = np.random.default_rng(0)
    a = rng.standard_normal((4, 4))
    sigma = a @ a.T + 0.5 * np.eye(4)
    base = gls_estimate(dhat, sigma)
    assert math.isclose(gls_estimate(dhat + shift, sigma), base + shift, abs_tol=1e-9)
    assert math.isclose(gls_estimate(dhat, scale * sigma), base, abs_tol=1e-9)


@fast
@given(st.floats(-0.45, 1.2).filter(lambda d: abs(d - 0.5) > 1e-3), st.integers(1, 4), st.integers(1, 4),
       st.floats(-5, 5), st.floats(-5, 5))
@example(0.0, 1, 1, 0.0, 2.2250738585e-313)
def test_z_cov_symmetric(d, i, j, u, v):
    assert math.isclose(z_cov(d, i, j, u, v), z_cov(d, j, i, v, u), rel_tol=1e-9, abs_tol=1e-12)


models = st.one_of(
    st.builds(ARFIMA, st.floats(-0.45, 1.45).map(lambda v: round(v, 3)),
              st.lists(st.floats(-0.8, 0.8).map(lambda v: round(v, 2)), max_size=1).map(tuple)),
    st.builds(FGN, st.floats(0.05, 0.95).map(lambda v: round(v, 3))),
    st.builds(PowerLawPlus, st.floats(-0.4, 1.4).map(lambda v: round(v, 3)), st.floats(0, 5), st.floats(0.1, 2)),
)


@fast
@given(models)
def test_model_text_round_trip(model):
    assert parse_model(str(model)) == model


@fast
@given(st.lists(st.tuples(st.text("abc(),=.[]", min_size=1, max_size=12), st.integers(50, 10**6),
                          st.floats(0, 2), st.floats(-1, 2), st.floats(0, 1)), max_size=4))
def test_csv_round_trip(cells):
    rows = tuple(ResultRow(m, n, 100, r, md, 0.01, acc, 1 - acc, 0, 0.0) for m, n, r, md, acc in cells)
    text = emit(ResultTable(rows))
    back = parse_csv(text)
    assert [b["model"] for b in back] == [r.model for r in rows]
    again = tuple(ResultRow(b["model"], b["N"], b["R"], b["rmse"], b["mean_d"], b["se_rmse"], b["acc_S"],
                            b["rej_T"], b["failures"], b["wall_ms"]) for b in back)
    assert emit(ResultTable(again)) == text
