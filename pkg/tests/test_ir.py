import math

import numpy as np
import pytest

from mirstat.ir import ir_profile, ir_single, ir_single_naive
from mirstat.lambdas import lambda0
from mirstat.sim import ARFIMA, simulate


def test_ramp_gives_one():
    x = np.arange(200.0)
    for ell in (1, 3, 10):
        assert ir_single(x, ell) == 1.0
        assert ir_single_naive(x, ell) == 1.0
    prof = ir_profile(x, 2, 3)
    assert prof.values.tolist() == [1.0, 1.0, 1.0]


def test_alternating_gives_zero():
    x = (-1.0) ** np.arange(100)
    assert ir_single(x, 1) == 0.0
    assert ir_single_naive(x, 1) == 0.0


def test_constant_series_counts_as_one():
    assert ir_single(np.full(50, 3.0), 2) == 1.0


def test_white_noise_mean():
    x = np.random.default_rng(0).standard_normal(100_000)
    # terms are dependent over about 3 windows of length 5; generous SE bound
    se = 0.3 * math.sqrt(15 / x.size)
    assert abs(ir_single(x, 5) - lambda0(0.0)) < 3 * se


def test_naive_agreement_fixed_cases():
    x = np.random.default_rng(1).standard_normal(300)
    for ell in (1, 5, 17):
        assert ir_single(x, ell) == pytest.approx(ir_single_naive(x, ell), rel=1e-12)


def test_integrated_input_precision():
    x = np.cumsum(np.cumsum(np.random.default_rng(2).standard_normal(2000)))
    for ell in (3, 40):
        assert ir_single(x, ell) == pytest.approx(ir_single_naive(x, ell), rel=1e-10)


def test_scale_errors():
    x = np.zeros(30)
    with pytest.raises(ValueError):
        ir_single(x, 10)
    with pytest.raises(ValueError):
        ir_single(x, 0)

def test_profile_structure():
    x = np.random.default_rng(3).standard_normal(1000)
    prof = ir_profile(x, 7.9, 4)
    assert prof.m == 7
    assert prof.scales.tolist() == [7, 14, 21, 28]
    assert prof.term_counts.tolist() == [1000 - 21 * j for j in range(1, 5)]
    assert prof.values.tolist() == [ir_single(x, 7 * j) for j in range(1, 5)]


def test_profile_min_terms():
    x = np.zeros(100)
    ir_profile(x, 4, 6)  # 100 - 72 = 28 terms
    with pytest.raises(ValueError, match="too short"):
        ir_profile(x, 5, 6)  # 100 - 90 = 10 terms


def test_profile_near_limit_for_long_memory():
    x = simulate(ARFIMA(0.2), 5000, 4).values
    prof = ir_profile(x, 20, 5)
    # loose 4-SD band with SD about 0.3 * sqrt(j m / N)
    sd = 0.3 * np.sqrt(prof.scales / 5000)
    assert np.all(np.abs(prof.values - lambda0(0.2)) < 4 * sd)


def test_input_validation():
    with pytest.raises(ValueError, match="non-finite"):
        ir_single([1.0, np.nan, 2.0, 3.0, 4.0], 1)
    with pytest.raises(ValueError, match="one-dimensional"):
        ir_single(np.zeros((3, 3)), 1)
