"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL line at the end of the run."""
import time

import numpy as np
import pytest

from ewens_pitman.asymptotics import (constants, exact_mean_k, finite_sigma2, gamma_ratio_exact,
                                      gamma_ratio_expansion, normaliser_gaps, power_integrand,
                                      riemann_right_sum)
from ewens_pitman.cli import parse_config, results_bytes, run
from ewens_pitman.martingale import (azuma_bound, azuma_concentration_check, one_step_moment_check,
                                     petrov_diagnostics, simulate_martingale)
from ewens_pitman.model import (ModelParams, ScalingParams, enumerate_partition_check,
                                exact_k_distribution, sample_k_batch, sample_k_final)
from ewens_pitman.stats import clt_experiment, fit_loglog_slope, tv_distance

LAMBDAS = (0.1, 0.5, 1.0, 2.0, 10.0)
ALPHAS = tuple(round(0.1 * i, 1) for i in range(1, 10))
CLT_N = (250, 1000, 4000)
CLT_REPLICATES = 50_000


@pytest.mark.acceptance(1, "partition law normalisation and K marginal vs DP")
def test_partition_law_enumeration(criterion):
    t0 = time.perf_counter()
    worst_mass, worst_pmf = 0.0, 0.0
    for alpha, theta in [(0.0, 1.0), (0.5, 1.0), (0.3, 2.0), (0.9, 0.5)]:
        params = ModelParams(alpha, theta)
        for n in range(2, 9):
            total, marginal = enumerate_partition_check(params, n)
            worst_mass = max(worst_mass, abs(total - 1.0))
            gap = np.abs(marginal.pmf - exact_k_distribution(params, n).pmf)
            worst_pmf = max(worst_pmf, float(gap.max()))
    elapsed = time.perf_counter() - t0
    criterion.check(worst_mass <= 1e-10, f"max |mass - 1| = {worst_mass:.2e}")
    criterion.check(worst_pmf <= 1e-12, f"max pmf gap = {worst_pmf:.2e}")
    criterion.check(elapsed < 10, f"{elapsed:.1f}s")


@pytest.mark.acceptance(2, "simulator vs exact law, total variation")
def test_simulator_total_variation(criterion):
    t0 = time.perf_counter()
    params = ScalingParams(0.5, 0.5).at(50)
    samples = sample_k_final(params, 50, 200_000, seed=2024)
    tv = tv_distance(exact_k_distribution(params, 50), samples)
    elapsed = time.perf_counter() - t0
    criterion.check(tv <= 0.01, f"TV = {tv:.4f}")
    criterion.check(elapsed < 30, f"{elapsed:.1f}s")


@pytest.mark.acceptance(3, "law of large numbers at n = 1e5")
def test_law_of_large_numbers(criterion):
    t0 = time.perf_counter()
    for alpha, m in [(0.5, 0.828427), (0.0, 0.693147)]:
        ratio = sample_k_batch(ScalingParams(alpha, 1.0), 100_000, 20, seed=3) / 100_000
        worst = float(np.max(np.abs(ratio - m)))
        criterion.check(worst <= 0.01, f"alpha={alpha}: max |K/n - m| = {worst:.2e}")
    elapsed = time.perf_counter() - t0
    criterion.check(elapsed < 60, f"{elapsed:.1f}s")


@pytest.mark.acceptance(4, "exact mean and pathwise increment bound")
def test_mean_and_increment_bound(criterion):
    n = 2000
    worst = 0.0
    for lam in LAMBDAS:
        for alpha in (0.0,) + ALPHAS:
            params = ScalingParams(alpha, lam).at(n)
            dp = exact_k_distribution(params, n).mean()
            worst = max(worst, abs(exact_mean_k(params, n) / dp - 1.0))
    criterion.check(worst <= 1e-8, f"max relative mean gap = {worst:.2e}")
    summary = simulate_martingale(ScalingParams(0.5, 1.0), 1000, 1000, seed=4)
    criterion.check(summary.increment_violations == 0,
                    f"{summary.increment_violations} increment violations over 1000 paths")


@pytest.mark.acceptance(5, "one-step conditional moments of the martingale")
def test_one_step_moments(criterion):
    rng = np.random.default_rng(5)
    n = 1000
    failures = []
    for cell in range(10):
        scaling = ScalingParams(float(rng.choice([0.2, 0.5, 0.8])), float(rng.choice([0.5, 1.0, 2.0])))
        j = int(rng.integers(1, n + 1))
        k = int(rng.integers(1, j + 1))
        check = one_step_moment_check(k, j, scaling, n, 1_000_000, seed=cell)
        if not check.passed(4.0):
            failures.append((scaling, j, k, check))
    criterion.check(not failures, f"{10 - len(failures)}/10 cells within 4 standard errors")


def _clt(alpha, criterion, slope_bar, ks_cap=None):
    t0 = time.perf_counter()
    report = clt_experiment(ScalingParams(alpha, 1.0), CLT_N, CLT_REPLICATES, seed=6)
    elapsed = time.perf_counter() - t0
    ks = report.ks
    criterion.check(all(a > b for a, b in zip(ks, ks[1:])),
                    "KS " + ", ".join(f"{v:.4f}" for v in ks))
    if ks_cap is not None:
        criterion.check(ks[-1] <= ks_cap, f"KS(n=4000) <= {ks_cap}")
    criterion.check(report.fitted_slope <= slope_bar, f"slope {report.fitted_slope:.3f}")
    criterion.check(elapsed < 180, f"{elapsed:.1f}s")


@pytest.mark.acceptance(6, "normal approximation rate, alpha = 0")
def test_clt_alpha_zero(criterion):
    _clt(0.0, criterion, -0.35, ks_cap=0.05)


@pytest.mark.acceptance(7, "normal approximation rate, alpha = 0.5")
def test_clt_alpha_half(criterion):
    _clt(0.5, criterion, -0.15)


@pytest.mark.acceptance(8, "first-order rates of the normalisers")
def test_normaliser_rates(criterion):
    for lam, alpha in [(1.0, 0.5), (2.0, 0.3)]:
        scaled = np.array([n * np.array(normaliser_gaps(ScalingParams(alpha, lam), n))
                           for n in (100, 1000, 10_000, 100_000)])
        ok = bool(np.all(scaled.max(axis=0) <= 2 * scaled[0]))
        criterion.check(ok, f"(lam={lam}, alpha={alpha}) n*gaps at 1e5: "
                            f"{scaled[-1, 0]:.4f}, {scaled[-1, 1]:.4f}")


@pytest.mark.acceptance(9, "right Riemann sum error guarantee")
def test_riemann_guarantee(criterion):
    violations, cases = 0, 0
    for lam in LAMBDAS:
        for alpha in (0.0,) + ALPHAS:
            f, deriv, integral = power_integrand(lam, alpha)
            for n in (10, 100, 1000, 10_000):
                total, bound = riemann_right_sum(f, n, deriv)
                cases += 1
                violations += abs(total - integral) > bound
    criterion.check(violations == 0, f"{violations} violations in {cases} cases")


@pytest.mark.acceptance(10, "gamma-ratio expansion error decays like z^-2")
def test_gamma_ratio_expansion(criterion):
    ratios = []
    for a, b in [(0.0, 0.5), (0.5, 0.0), (1.0, 0.3)]:
        for z in (50.0, 100.0, 200.0):
            err = [abs(gamma_ratio_expansion(x, a, b).value / gamma_ratio_exact(x, a, b) - 1)
                   for x in (z, 2 * z)]
            ratios.append(err[1] / err[0])
    criterion.check(all(0.15 <= r <= 0.35 for r in ratios),
                    f"ratios in [{min(ratios):.4f}, {max(ratios):.4f}]")


@pytest.mark.acceptance(11, "limit-variance identity on the 5x9 grid")
def test_variance_identity(criterion):
    worst = 0.0
    for lam in LAMBDAS:
        for alpha in ALPHAS:
            c = constants(ScalingParams(alpha, lam))
            rhs = lam ** 2 * c.sigma2 * (1 + 1 / lam) ** (2 * alpha) / alpha ** 2
            worst = max(worst, abs(rhs / c.s2 - 1))
    criterion.check(worst <= 1e-12, f"max relative gap = {worst:.2e}")


@pytest.mark.acceptance(12, "finite-n martingale variance converges at rate 1/n")
def test_finite_sigma2(criterion):
    s = ScalingParams(0.5, 1.0)
    sigma2 = constants(s).sigma2
    scaled = [n * abs(finite_sigma2(s, n) - sigma2) for n in (1000, 10_000, 100_000)]
    criterion.check(max(scaled) <= 2 * scaled[0], "n*gap " + ", ".join(f"{v:.4f}" for v in scaled))
    last = finite_sigma2(s, 100_000)
    criterion.check(abs(last - 0.0214466) <= 1e-6, f"value at n=1e5 = {last:.7f}")


@pytest.mark.acceptance(13, "Lyapunov ratio, variance per customer, Hall-Heyde functional")
def test_lyapunov_variance_hall_heyde(criterion):
    n_values = [100, 1000, 10_000, 100_000]
    reports = [petrov_diagnostics(1.0, n) for n in n_values]
    slope = fit_loglog_slope(n_values, [r.lyapunov for r in reports])
    criterion.check(abs(slope + 0.5) <= 0.05, f"Lyapunov slope {slope:.4f}")
    s2 = constants(ScalingParams(0.0, 1.0)).s2
    scaled = [n * abs(r.sigma_n2 / n - s2) for n, r in zip(n_values, reports)]
    criterion.check(abs(s2 - 0.193147) <= 1e-6 and max(scaled) <= 2 * scaled[0],
                    f"n*|sigma_n^2/n - s2| max {max(scaled):.4f}")
    ln = [simulate_martingale(ScalingParams(0.5, 1.0), n, 10_000, seed=13).hall_heyde.ln
          for n in CLT_N]
    criterion.check(all(a > b for a, b in zip(ln, ln[1:])), "L_n " + ", ".join(f"{v:.5f}" for v in ln))


@pytest.mark.acceptance(14, "uniform concentration of the martingale")
def test_azuma(criterion):
    s, n, eps = ScalingParams(0.5, 1.0), 10_000, 0.05
    frac = azuma_concentration_check(s, n, eps, 1000, seed=14)
    bound = azuma_bound(s, n, eps)
    criterion.check(frac == 0.0 and frac <= bound.union,
                    f"fraction {frac}, bound {bound.union:.3g} (single-time {bound.single_time:.3g})")


@pytest.mark.acceptance(15, "byte-identical results across repeats and worker counts")
def test_determinism(criterion):
    runs = [
        ["--command", "clt", "--lambda", "1", "--alpha", "0", "--alpha", "0.5",
         "--n", "250", "--n", "1000", "--n", "4000", "--replicates", "5000", "--seed", "6"],
        ["--command", "lln", "--lambda", "1", "--alpha", "0.5", "--n", "100000",
         "--replicates", "20", "--seed", "3"],
        ["--command", "martingale", "--lambda", "1", "--alpha", "0.5", "--n", "1000",
         "--replicates", "1000", "--seed", "4"],
        ["--command", "sample", "--lambda", "0.5", "--alpha", "0.5", "--n", "50",
         "--replicates", "20000", "--seed", "2024"],
    ]
    for argv in runs:
        outputs = {results_bytes(run(parse_config(argv + ["--workers", str(w)])), "csv")
                   for w in (1, 1, 4)}
        criterion.check(len(outputs) == 1, f"{argv[1]} identical")
