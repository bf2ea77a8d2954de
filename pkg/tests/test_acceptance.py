"""One test per acceptance criterion; verdict lines appear in the terminal summary."""

import math
import time

import numpy as np

from mirstat.asymcov import gamma_empirical, load_default_table, sigma_ij, sigma_p, z_cov
from mirstat.bench import ExperimentSpec, emit, run_experiment
from mirstat.ir import ir_single, ir_single_naive
from mirstat.lambdas import lam, lambda0, rho
from mirstat.sim import ARFIMA, PowerLawPlus, simulate
from mirstat.theory import bias_rate_check, chain_error, expansion_constant, expected_ir, j_integral, integral_identities

RHO_HALF_CLOSED = 9 * math.log(3) / (8 * math.log(2)) - 2


def _timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


def test_criterion_01_closed_form_anchors(criterion):
    def run():
        grid = np.linspace(-0.499, 1.499, 2000)
        return {
            "rho0": rho(0.0) == -0.5 or abs(rho(0.0) + 0.5) < 1e-15,
            "rho1": abs(rho(1.0) - 0.25) < 1e-15,
            "cont": max(abs(rho(0.5 + s) - RHO_HALF_CLOSED) for s in (-1e-7, 1e-7)) < 1e-5,
            "lam": lam(-1.0) == 0.0 and lam(1.0) == 1.0,
            "mono": bool(np.all(np.diff(lambda0(grid)) > 0)),
        }

    res, secs = _timed(run)
    ok = all(res.values()) and secs < 1.0
    assert criterion(1, ok, f"anchors {res}, {secs:.2f}s"), res


def test_criterion_02_covariance_identity(criterion):
    def run():
        ds = np.r_[np.linspace(-0.45, 0.45, 20), np.linspace(0.55, 1.2, 20)]
        return max(abs(z_cov(d, 1, 1, 0.0, 1.0) / z_cov(d, 1, 1, 0.0, 0.0) - rho(d)) for d in ds)

    err, secs = _timed(run)
    ok = err < 1e-9 and secs < 1.0
    assert criterion(2, ok, f"max |corr - rho| = {err:.2e} over 40 d values, {secs:.2f}s")


def test_criterion_03_variance_anchor(criterion):
    target = 0.2524**2
    analytic, t_a = _timed(lambda: sigma_ij(0.5, 1, 1))
    empirical, t_e = _timed(lambda: float(gamma_empirical(0.5, 1, n=100_000, reps=500, seed=2024)[0, 0]))
    e_a = abs(analytic / target - 1)
    e_e = abs(empirical / target - 1)
    ok = e_a < 0.05 and e_e < 0.15 and t_a < 60 and t_e < 600
    assert criterion(3, ok, f"analytic {analytic:.5f} ({e_a:.1%}, {t_a:.0f}s), "
                            f"empirical {empirical:.5f} ({e_e:.1%}, {t_e:.0f}s), target {target:.5f}")


def test_criterion_04_sigma_p_constants(criterion):
    reference = {5: 0.9082, 10: 0.8289, 15: 0.8016, 20: 0.7861}
    got = {p: sigma_p(0.5, load_default_table(p)) for p in reference}
    errs = {p: got[p] / reference[p] - 1 for p in reference}
    ok = all(abs(e) < 0.05 for e in errs.values())
    detail = ", ".join(f"p={p}: {got[p]:.4f} ({errs[p]:+.1%})" for p in reference)
    assert criterion(4, ok, detail)


def test_criterion_05_expectation_oracle(criterion):
    def run():
        out = {}
        for d in (0.2, 0.8):
            vals = np.array([ir_single(simulate(ARFIMA(d), 100_000, 5000 + s).values, 30) for s in range(100)])
            se = vals.std(ddof=1) / 10
            out[d] = (vals.mean() - expected_ir(ARFIMA(d), 30)) / se
        return out

    z, secs = _timed(run)
    ok = all(abs(v) < 3 for v in z.values()) and secs < 300
    assert criterion(5, ok, f"z-scores {', '.join(f'd={d}: {v:+.2f}' for d, v in z.items())}, {secs:.0f}s")


def test_criterion_06_clt_variance(criterion):
    def run():
        n = 100_000
        m = int(math.floor(n**0.3))
        vals = np.array([ir_single(simulate(ARFIMA(0.5), n, 9000 + s).values, m) for s in range(300)])
        return float(np.var(math.sqrt(n / m) * vals, ddof=1))

    var, secs = _timed(run)
    target = sigma_ij(0.5, 1, 1)
    err = var / target - 1
    ok = abs(err) < 0.15 and secs < 600
    assert criterion(6, ok, f"empirical {var:.5f} vs {target:.5f} ({err:+.1%}), {secs:.0f}s")


def test_criterion_07_bias_rates(criterion):
    def run():
        a = bias_rate_check(PowerLawPlus(0.8, 5.0, 0.5), np.geomspace(100, 3200, 11))
        b = bias_rate_check(ARFIMA(0.9), np.geomspace(100, 3200, 11))
        return a.slope, b.slope

    (s1, s2), secs = _timed(run)
    ok = abs(s1 + 0.5) <= 0.15 and abs(s2 + 2.0) <= 0.3 and secs < 120
    assert criterion(7, ok, f"slopes {s1:.3f} (target -0.5), {s2:.3f} (target -2), {secs:.0f}s")


def _bench(models, n, seed):
    return run_experiment(ExperimentSpec(models=tuple(models), ns=(n,), reps=100, seed=seed))


def test_criterion_08_rmse_small_sample(criterion):
    reference = {0.0: 0.092, 0.4: 0.096, 1.0: 0.099}
    table, secs = _timed(lambda: _bench([ARFIMA(d) for d in reference], 500, 8))
    got = {d: table.row(ARFIMA(d), 500).rmse for d in reference}
    ok = all(abs(got[d] - reference[d]) <= 0.04 for d in reference) and secs < 300
    detail = ", ".join(f"d={d}: {got[d]:.3f} (ref {reference[d]})" for d in reference)
    assert criterion(8, ok, f"{detail}, {secs:.0f}s")


def test_criterion_09_test_frequencies(criterion):
    acc_ref = {-0.2: 1.00, 0.2: 1.00, 0.8: 0.09, 1.0: 0.01}
    rej_ref = {-0.2: (1.00, 0.07), 0.4: (0.53, 0.12)}
    ds = sorted(set(acc_ref) | set(rej_ref))
    table, secs = _timed(lambda: _bench([ARFIMA(d) for d in ds], 500, 9))
    parts, ok = [], secs < 600
    for d, ref in acc_ref.items():
        v = table.row(ARFIMA(d), 500).acc_s
        ok &= abs(v - ref) <= 0.07
        parts.append(f"S acc d={d}: {v:.2f} ({ref})")
    for d, (ref, tol) in rej_ref.items():
        v = table.row(ARFIMA(d), 500).rej_t
        ok &= abs(v - ref) <= tol
        parts.append(f"T rej d={d}: {v:.2f} ({ref})")
    assert criterion(9, ok, ", ".join(parts) + f", {secs:.0f}s")


def test_criterion_10_rmse_ar_integrated(criterion):
    model = ARFIMA(1.0, ar=(-0.5,))
    table, secs = _timed(lambda: _bench([model], 5000, 10))
    got = table.rows[0].rmse
    ok = abs(got - 0.062) <= 0.04 and secs < 600
    assert criterion(10, ok, f"RMSE {got:.3f} (ref 0.062), {secs:.0f}s")


def test_criterion_11_oracle_equivalence(criterion):
    def run():
        rng = np.random.default_rng(11)
        worst = 0.0
        for _ in range(1000):
            n = int(rng.integers(20, 200))
            ell = int(rng.integers(1, (n - 1) // 3 + 1))
            ell = min(ell, 12)
            x = rng.standard_normal(n)
            if rng.random() < 0.3:
                x = np.cumsum(x)
            a, b = ir_single(x, ell), ir_single_naive(x, ell)
            worst = max(worst, abs(a - b) / max(abs(b), 1e-300))
        spec = ExperimentSpec(models=(ARFIMA(0.1), ARFIMA(0.7)), ns=(300,), reps=8, seed=11)
        same = emit(run_experiment(spec)) == emit(run_experiment(spec, workers=2))
        return worst, same

    (worst, same), secs = _timed(run)
    ok = worst < 1e-12 and same and secs < 60
    assert criterion(11, ok, f"max rel diff {worst:.1e} over 1000 cases, parallel==serial {same}, {secs:.0f}s")


def test_criterion_12_appendix(criterion):
    def run():
        chains = max(chain_error(integral_identities(item, s, lam_))
                     for item, vals in ((1, (0.5, 1.0, 1.5)), (2, (-0.5, 0.0, 0.5)), (3, (1.5, 2.0, 2.5)))
                     for s in vals for lam_ in (0.7, 1.0, 2.0))
        lead = max(abs(j_integral(j, a, 1e4) * 1e4 ** (a - 3) / expansion_constant(f"C{j}1", a) - 1)
                   for a in (-0.5, 0.0, 0.5) for j in (4, 6))
        ratio = max(abs(1 - 2 * j_integral(6, 2 - 2 * d, 1e3) / j_integral(4, 2 - 2 * d, 1e3) - rho(d))
                    for d in (0.6, 0.8, 1.0, 1.2))
        return chains, lead, ratio

    (chains, lead, ratio), secs = _timed(run)
    ok = chains < 1e-6 and lead < 1e-2 and ratio < 1e-3 and secs < 120
    assert criterion(12, ok, f"chains {chains:.1e}, leading {lead:.1e}, ratio {ratio:.1e}, {secs:.0f}s")
