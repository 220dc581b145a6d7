import math
import warnings

import numpy as np
import pytest
from scipy import stats

from levystein.levy import (GridSpec, LevyModel, ModelKind, ParameterError, check_tail_bound, cumulative_sum,
                            estimate_truncated_moments, normalization, sample_increment_rows, sample_marginal,
                            sample_path, sample_stable_standard, steps_for)
from levystein.rng import Role, RngStream, stable_rows

M = 10**6


@pytest.mark.parametrize("kw", [dict(alpha=0.0), dict(alpha=2.1), dict(alpha=1.0, scale=0.0), dict(dim=0)])
def test_model_validation(kw):
    with pytest.raises(ParameterError):
        LevyModel.stable(**{"alpha": 1.5, **kw}) if "alpha" in kw else LevyModel(**kw)


def test_brownian_is_alpha_two():
    assert LevyModel.brownian().alpha == 2.0
    assert LevyModel(ModelKind.BROWNIAN, alpha=2.0).kind is ModelKind.BROWNIAN


def test_sample_stable_standard_alpha_guard():
    with pytest.raises(ParameterError):
        sample_stable_standard(2.5, RngStream(0))


def test_alpha_two_variance_is_two():
    x = stable_rows(0, np.arange(1000), Role.PATH, 2.0, 1000).ravel()
    se = math.sqrt((np.mean(x**4) - x.var() ** 2) / x.size)
    assert abs(x.var() - 2.0) < 3 * se


def test_cauchy_half_mass_in_unit_interval():
    x = stable_rows(1, np.arange(1000), Role.PATH, 1.0, 1000).ravel()
    p = np.mean(np.abs(x) <= 1)
    assert abs(p - 0.5) < 3 * math.sqrt(0.25 / x.size)


@pytest.mark.parametrize("alpha", [0.5, 0.7, 1.0, 1.5, 2.0])
def test_characteristic_function(alpha):
    x = stable_rows(2, np.arange(1000), Role.PATH, alpha, 1000).ravel()
    for u in (0.5, 1.0, 2.0):
        assert abs(np.mean(np.cos(u * x)) - math.exp(-abs(u) ** alpha)) <= 4 / math.sqrt(x.size)


def test_normalization_values():
    assert normalization(LevyModel.brownian(), 100) == pytest.approx(10.0, rel=1e-15)
    assert normalization(LevyModel.stable(0.5), 16) == pytest.approx(256.0, rel=1e-15)


def test_self_similarity_cf_at_n64():
    model = LevyModel.stable(1.5)
    inc = sample_increment_rows(model, 64, 1, np.arange(100000), 4, Role.PATH)[:, 0, 0]
    y = normalization(model, 64) * inc
    for u in (0.5, 1.0, 2.0):
        assert abs(np.mean(np.cos(u * y)) - math.exp(-u**1.5)) <= 4 / math.sqrt(y.size)


def test_self_similarity_ks():
    model = LevyModel.stable(1.5)
    a = sample_increment_rows(model, 16, 1, np.arange(100000), 5, Role.PATH)[:, 0, 0] * normalization(model, 16)
    b = sample_increment_rows(model, 256, 1, np.arange(100000), 6, Role.PATH)[:, 0, 0] * normalization(model, 256)
    stat = stats.ks_2samp(a, b).statistic
    assert stat < 1.628 * math.sqrt(2 / 100000)   # 1% critical value


def test_one_step_grid_is_x1():
    model = LevyModel.stable(1.2)
    p = sample_path(model, GridSpec(1, 1.0, 0, 1), RngStream(8))
    assert p.increments.shape == (1, 1)
    assert p.increments[0, 0] == RngStream(8).stable(1.2, 1)[0]


def test_path_determinism_and_prefix_sums():
    model, grid = LevyModel.stable(1.5, dim=2), GridSpec(50, 1.3, 2, 2)
    a = sample_path(model, grid, RngStream(9, 3))
    b = sample_path(model, grid, RngStream(9, 3))
    assert np.array_equal(a.increments, b.increments)
    assert a.increments.shape == (steps_for(50, 1.3) + 2, 2)
    assert np.array_equal(a.cumulative[0], np.zeros(2))
    assert np.array_equal(a.cumulative, cumulative_sum(a.increments))
    assert np.array_equal(a.cumulative[1:], np.cumsum(a.increments, axis=0))


def test_components_uncorrelated():
    model = LevyModel.brownian(dim=2)
    inc = sample_increment_rows(model, 1, 1, np.arange(100000), 10, Role.PATH)[:, 0, :]
    r = np.corrcoef(inc[:, 0], inc[:, 1])[0, 1]
    assert abs(r) < 3 / math.sqrt(100000)


def test_grid_validation():
    with pytest.raises(ParameterError):
        GridSpec(2, 0.4, 0, 1)
    with pytest.raises(ParameterError):
        GridSpec(2, 1.0, -1, 1)


def test_cauchy_tail_oracle():
    rep = check_tail_bound(LevyModel.stable(1.0), 1.0, [10.0], 400000, master_seed=3)
    oracle = 1 - 2 / math.pi * math.atan(10)
    assert rep.ci_low[0] <= oracle <= rep.ci_high[0]


def test_tails_monotone_and_kappa_stable():
    model = LevyModel.stable(1.5)
    s = np.geomspace(0.5, 20, 16)
    r1 = check_tail_bound(model, 1.0, s, 200000, master_seed=1)
    r2 = check_tail_bound(model, 0.1, s, 200000, master_seed=2)
    assert np.all(np.diff(r1.p_hat) <= 0)
    assert not r1.violation and np.isfinite(r1.kappa)
    assert abs(r1.kappa - r2.kappa) / r1.kappa < 0.2


def test_brownian_h3_passes():
    rep = check_tail_bound(LevyModel.brownian(), 1.0, np.linspace(1, 5, 9), 200000, master_seed=4)
    assert rep.h3_pass


def test_tail_undersampled_warns():
    with pytest.warns(UserWarning, match="undersampled"):
        rep = check_tail_bound(LevyModel.brownian(), 1.0, [50.0], 1000)
    assert rep.ci_high[0] > 0


@pytest.mark.parametrize("alpha,target", [(1.5, -1 / 1.5), (0.5, -1.0)])
def test_truncated_moment_slopes(alpha, target):
    tab = estimate_truncated_moments(LevyModel.stable(alpha), [2**k for k in range(4, 13)], 100000)
    assert abs(tab.slopes["one_abs"] - target) <= 0.1


def test_moments_vanish_with_scale():
    tab = estimate_truncated_moments(LevyModel.stable(1.5, scale=1e-12), [4, 16], 1000)
    assert np.all(tab.one_abs < 1e-8) and np.all(tab.one_sq < 1e-8) and np.all(tab.abs_sq < 1e-8)


def test_sample_marginal_scale():
    x = sample_marginal(LevyModel.brownian(scale=0.5), 2.0, 200000, 0)[:, 0]
    assert abs(x.var() - 2.0) < 0.05
