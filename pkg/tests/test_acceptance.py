"""Acceptance criteria, one test each.

Run with ``pytest tests/test_acceptance.py -s`` to see the PASS/FAIL summary lines
(they are also printed without ``-s``, through ``capsys.disabled``).
"""
import filecmp
import math
import time
from pathlib import Path

import numpy as np
import pytest

from levystein.asymptotics import estimate_gn_mc, variance_profile
from levystein.experiments.config import ExperimentConfig
from levystein.experiments.rates import fit_rate, read_csv, run_rate_experiment
from levystein.functionals import CosineFunctional, ShiftedCosineWeight, closed_form_gn, make_functional
from levystein.levy import LevyModel, estimate_truncated_moments, sample_marginal
from levystein.metric import build_default_family
from levystein.stable_convergence import ConditioningProbe, ScalarH, ProductH, check_stein_condition
from levystein.stein import (DEFAULT_PROBES, GaussianBump, PolynomialTest, SineTest, check_gaussian_distance_lemma,
                             check_hprime_taylor, fd_second_derivative_gap, solve_stein)

ROOT = Path(__file__).resolve().parents[1]
RATE_CONFIG = ROOT / "configs" / "rate_symmetric.toml"


@pytest.fixture
def report(capsys):
    def emit(k: int, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {k}: {detail}")
        assert ok, detail
    return emit


@pytest.fixture(scope="module")
def family():
    return build_default_family()


@pytest.fixture(scope="module")
def rate_runs(tmp_path_factory):
    """The rate experiment under one and eight workers; filled lazily by criteria 7 and 9."""
    return {"base": tmp_path_factory.mktemp("rates")}


def _rate_csv(runs, workers):
    key = f"w{workers}"
    if key not in runs:
        cfg = ExperimentConfig.load(RATE_CONFIG)
        out = runs["base"] / key
        start = time.perf_counter()
        runs[key] = run_rate_experiment(cfg, out, workers=workers)
        runs[key + "_time"] = time.perf_counter() - start
    return runs[key]


def test_criterion_1_characteristic_function(report):
    M = 10**6
    start = time.perf_counter()
    worst = 0.0
    for alpha in (0.7, 1.0, 1.5, 2.0):
        model = LevyModel.stable(alpha)
        x = sample_marginal(model, 1.0, M, master_seed=101)[:, 0]
        for u in (0.5, 1.0, 2.0):
            worst = max(worst, abs(np.mean(np.cos(u * x)) - float(model.cf(u))) * math.sqrt(M))
    elapsed = time.perf_counter() - start
    report(1, worst <= 4.0 and elapsed < 30,
           f"max |cf_hat - cf| * sqrt(M) = {worst:.2f} (limit 4), {elapsed:.1f}s (limit 30s)")


def test_criterion_2_gn_closed_form(report):
    M, n = 10**6, 32
    worst, lines = 0.0, []
    for m in (0, 1, 2):
        for d in (1, 2):
            for alpha in (1.5, 2.0):
                freqs = np.array([[0.9, 0.5][:d]] * (m + 1)) * (1 + 0.1 * np.arange(m + 1))[:, None]
                g = CosineFunctional(ShiftedCosineWeight(tuple([1.0] * d), 0.5, 1.0), freqs)
                model = LevyModel.stable(alpha, dim=d)
                x = np.full(d, 0.3)
                est, se = estimate_gn_mc(g, model, n, x, M, master_seed=7)
                z = abs(est - closed_form_gn(g, model, n, x)) / se
                worst = max(worst, z)
                lines.append(f"m={m},d={d},a={alpha}:{z:.2f}")
    report(2, worst <= 3.0, f"12 configs, max |mc - exact|/se = {worst:.2f} (limit 3)")


def test_criterion_3_stein_solver(report, family):
    gammas = (0.25, 0.5, 1.0, 2.0, 4.0)
    res, gap = 0.0, 0.0
    for psi in family.members:
        for gamma in gammas:
            sol = solve_stein(psi, gamma)
            res = max(res, sol.max_residual)
            gap = max(gap, fd_second_derivative_gap(sol))
    sq = max(float(np.max(np.abs(solve_stein(PolynomialTest((0.0, 0.0, 1.0)), g).h_prime(DEFAULT_PROBES)
                                 - DEFAULT_PROBES))) for g in gammas)
    report(3, res <= 1e-6 and sq <= 1e-8 and gap <= 1e-5,
           f"residual {res:.2e} (<=1e-6), x^2 h' error {sq:.2e} (<=1e-8), fd gap {gap:.2e} (<=1e-5)")


def test_criterion_4_taylor_slope(report, family):
    deltas = (0.4, 0.2, 0.1, 0.05)
    cases = {"sin": SineTest(1.0, 0.0, 1.0), "cos": SineTest(1.0, math.pi / 2, 1.0),
             "bump": GaussianBump(0.0, 1.5, family.members[-1].c)}
    slopes = {k: check_hprime_taylor(psi, 1.0, [1 + d for d in deltas], np.linspace(-5, 5, 41)).slope
              for k, psi in cases.items()}
    ok = all(abs(s - 2.0) <= 0.1 for s in slopes.values())
    report(4, ok, "slopes " + ", ".join(f"{k} {s:.3f}" for k, s in slopes.items()) + " (2 +/- 0.1)")


def test_criterion_5_gaussian_distance(report, family):
    grid = [0.5, 0.75, 1.0, 1.5, 2.0]
    failures, worst = 0, 0.0
    for psi, cert in zip(family.members, family.certificates):
        rep = check_gaussian_distance_lemma(psi, grid, grid, sup4=cert.bounds[4])
        failures += int((~rep.passed).sum())
        pos = rep.bound > 0
        if pos.any():
            worst = max(worst, float(np.max(np.abs(rep.lhs[pos]) / rep.bound[pos])))
    report(5, failures == 0, f"{len(family)} members x 25 (sigma, s) pairs, {failures} violations, "
                             f"worst lhs/bound {worst:.3f}")


def test_criterion_6_moment_slopes(report):
    ns = [2**k for k in range(4, 13)]
    got = {a: estimate_truncated_moments(LevyModel.stable(a), ns, 10**5, master_seed=5).slopes["one_abs"]
           for a in (1.5, 0.5)}
    ok = abs(got[1.5] + 1 / 1.5) <= 0.1 and abs(got[0.5] + 1.0) <= 0.1
    report(6, ok, f"slope alpha=1.5 {got[1.5]:.3f} (-0.667 +/- 0.1), alpha=0.5 {got[0.5]:.3f} (-1 +/- 0.1)")


def test_criterion_7_rate_experiment(report, rate_runs):
    csv = _rate_csv(rate_runs, 1)
    rows = read_csv(csv)
    d = np.array([r["d_hat"] for r in rows])
    verdict = fit_rate(csv)
    decreasing = bool(np.all(np.diff(d) < 0))
    ok = decreasing and d[-1] < d[0] / 3 and verdict.fitted_slope <= -0.35 and verdict.bound_respected
    report(7, ok, f"d_hat {' '.join(f'{v:.4f}' for v in d)}; slope {verdict.fitted_slope:.3f} (<= -0.35), "
                  f"bound respected {verdict.bound_respected}, {rate_runs['w1_time']:.0f}s")


def test_criterion_8_stein_condition(report):
    cfg = ExperimentConfig.load(RATE_CONFIG)
    model, g = cfg.build_model(), cfg.build_functional()
    probe = ConditioningProbe(((1.0,),), (0.5,), "cos")
    h = ProductH((ScalarH("tanh", 1.0),))
    rep = check_stein_condition(model, g, variance_profile(g, model), [64, 1024], [probe], [h], 10**5,
                                master_seed=11)
    lo, hi = rep.series(probe.label(), h.label())
    separated = lo.abs_ci[0] > hi.abs_ci[1]
    ok = abs(hi.mean) < 0.5 * abs(lo.mean) and separated
    report(8, ok, f"stat n=64 {lo.mean:+.4f} (se {lo.stderr:.4f}), n=1024 {hi.mean:+.4f} (se {hi.stderr:.4f}), "
                  f"ratio {abs(hi.mean) / abs(lo.mean):.3f} (< 0.5), CIs separated {separated}")


def test_criterion_9_worker_invariance(report, rate_runs):
    one = _rate_csv(rate_runs, 1)
    eight = _rate_csv(rate_runs, 8)
    same = filecmp.cmp(one, eight, shallow=False)
    report(9, same, f"rates CSV with 1 and 8 workers {'byte-identical' if same else 'differ'}")
