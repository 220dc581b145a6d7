import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from levystein.metric import (GaussianBump, SineTest, bump_scale, build_default_family, certify, cf_distance,
                              estimate_distance, family_from_members)
from levystein.stein import gaussian_mean


@pytest.fixture(scope="module")
def family():
    return build_default_family()


def test_default_family_composition(family):
    kinds = [m.describe()["kind"] for m in family.members]
    assert len(family) == 24 and kinds.count("sine") == 20 and kinds.count("bump") == 4
    for m in family.members:
        if isinstance(m, SineTest):
            assert m.c == min(1.0, m.a**-5) and 0 < m.a <= 3 and m.b in (0.0, math.pi / 2)


def test_certification_examples():
    assert certify(SineTest(1.0, 0.0, 1.0)).certified
    assert certify(SineTest(2.0, 0.0, 2**-5)).certified
    bad = certify(SineTest(2.0, 0.0, 0.05))
    assert not bad.certified and bad.bounds[5] == pytest.approx(1.6)


def test_rejected_member_logged(caplog):
    with caplog.at_level(logging.WARNING):
        fam = family_from_members([SineTest(1.0), SineTest(2.0, 0.0, 0.05)])
    assert len(fam) == 1 and len(fam.rejected) == 1 and "dropping" in caplog.text
    with pytest.raises(ValueError):
        family_from_members([SineTest(2.0, 0.0, 0.05)])
    with pytest.raises(ValueError):
        build_default_family(0)


def test_bump_certificate_is_sound():
    c = bump_scale(1.5)
    bump = GaussianBump(0.3, 1.5, c)
    assert certify(bump).certified
    x = np.random.default_rng(0).uniform(-60, 60, 200000)
    for order in range(6):
        assert np.max(np.abs(bump.derivative(order)(x))) <= 1 + 1e-9


def test_family_descriptor_serialisable(family):
    import json
    desc = json.loads(json.dumps(family.describe()))
    assert len(desc["members"]) == 24 and len(desc["bounds"][0]) == 6


def test_identical_samples_zero(family):
    p = np.random.default_rng(1).normal(size=1000)
    assert estimate_distance(p, p.copy(), family).d_hat == 0.0
    assert cf_distance(p, p.copy(), [0.5, 1.0]) == 0.0


def test_empty_inputs_rejected(family):
    with pytest.raises(ValueError):
        estimate_distance([], [1.0], family)
    with pytest.raises(ValueError):
        cf_distance([1.0], [1.0], [])


def test_same_law_within_noise(family):
    rng = np.random.default_rng(2)
    hits = 0
    for _ in range(40):
        e = estimate_distance(rng.normal(size=2000), rng.normal(size=2000), family)
        hits += e.d_hat <= 3 * np.max(e.stderrs)
    assert hits / 40 >= 0.95


def test_detects_variance_change(family):
    rng = np.random.default_rng(3)
    p, q = rng.normal(size=10**6), 1.1 * rng.normal(size=10**6)
    e = estimate_distance(p, q, family)
    assert e.d_hat > 5 * e.stderr
    exact = gaussian_mean(e.member, 1.0) - gaussian_mean(e.member, 1.1)
    assert abs(e.differences[e.argmax] - exact) < 4 * e.stderr


def test_monotone_under_enlargement_and_symmetric(family):
    rng = np.random.default_rng(4)
    p, q = rng.normal(size=5000), rng.standard_cauchy(size=5000)
    small = family_from_members(family.members[:5])
    assert estimate_distance(p, q, family).d_hat >= estimate_distance(p, q, small).d_hat
    assert estimate_distance(p, q, family).d_hat == estimate_distance(q, p, family).d_hat


def test_cf_distance_oracle():
    rng = np.random.default_rng(5)
    p, q = rng.normal(size=10**6), 2 * rng.normal(size=10**6)
    assert cf_distance(p, q, [0.0]) == 0.0
    assert cf_distance(p, q, [1.0]) == pytest.approx(math.exp(-0.5) - math.exp(-2), abs=4e-3)


@settings(max_examples=15, deadline=None)
@given(a=st.floats(0.05, 3.0), b=st.floats(0, 3.2))
def test_certified_sines_respect_bounds(a, b):
    psi = SineTest(a, b, min(1.0, a**-5))
    cert = certify(psi)
    assert cert.certified
    x = np.linspace(-50, 50, 10001)
    assert all(np.max(np.abs(psi.derivative(l)(x))) <= 1 + 1e-9 for l in range(6))
