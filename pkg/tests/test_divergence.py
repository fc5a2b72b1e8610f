import math

import numpy as np
import pytest
from conftest import random_mixture
from hypothesis import given, settings
from hypothesis import strategies as st

from lrfsfusion import BernoulliTrack, GaussianMixture, Label
from lrfsfusion.divergence import (
    DivergenceKind,
    chernoff_gm,
    csd_gm,
    divergence,
    divergence_matrix,
    gci_divergence_bc,
    jsd_gm,
    kld_bernoulli,
    kld_gm,
    kld_jep,
    sigma_points,
)


def test_sigma_points_reproduce_moments(rng):
    mix = random_mixture(rng, 4, 3)
    pts, w = sigma_points(mix.means, mix.covs)
    for c in range(len(mix)):
        mean = w @ pts[c]
        spread = pts[c] - mean
        np.testing.assert_allclose(mean, mix.means[c], atol=1e-10)
        np.testing.assert_allclose((w[:, None] * spread).T @ spread, mix.covs[c], atol=1e-9)


def test_self_divergence_is_zero(rng):
    f = random_mixture(rng, 4, 3)
    g = GaussianMixture(f.weights.copy(), f.means.copy(), f.covs.copy())
    assert kld_gm(f, f) == 0.0
    assert kld_gm(f, g) == pytest.approx(0.0, abs=1e-10)
    assert csd_gm(f, g) == pytest.approx(0.0, abs=1e-10)
    assert chernoff_gm(f, g, 0.3) == 1.0


def test_jsd_symmetric_and_nonnegative(rng):
    for _ in range(10):
        f, g = random_mixture(rng, 2), random_mixture(rng, 2)
        assert jsd_gm(f, g) == pytest.approx(jsd_gm(g, f), rel=1e-12)
        assert jsd_gm(f, g) >= 0 and csd_gm(f, g) >= 0


def test_kld_sigma_point_close_to_monte_carlo(rng):
    f, g = random_mixture(rng, 2, 3, spread=3.0), random_mixture(rng, 2, 2, spread=3.0)
    idx = rng.choice(len(f), 200_000, p=f.weights)
    x = np.array([rng.multivariate_normal(f.means[i], f.covs[i]) for i in range(len(f))])
    samples = x[idx] if False else np.concatenate(
        [rng.multivariate_normal(f.means[i], f.covs[i], size=int((idx == i).sum())) for i in range(len(f))]
    )
    mc = float(np.mean(f.logpdf(samples) - g.logpdf(samples)))
    assert kld_gm(f, g) == pytest.approx(mc, rel=0.25, abs=0.1)


def test_chernoff_matches_quadrature():
    f1 = GaussianMixture.single([0.3], [[1.2]])
    f2 = GaussianMixture.single([-1.0], [[0.5]])
    x = np.linspace(-30, 30, 400001)[:, None]
    for omega in (0.2, 0.5, 0.9):
        num = np.trapezoid(f1.pdf(x) ** omega * f2.pdf(x) ** (1 - omega), x[:, 0])
        assert chernoff_gm(f1, f2, omega) == pytest.approx(num, rel=1e-8)


def test_chernoff_validates_omega(rng):
    f = random_mixture(rng, 2)
    with pytest.raises(ValueError):
        chernoff_gm(f, f, 1.5)


def test_divergence_matrix_matches_pairs(rng):
    a = [random_mixture(rng, 4, spread=5.0) for _ in range(4)]
    b = [random_mixture(rng, 4, spread=5.0) for _ in range(3)]
    for kind in DivergenceKind:
        M = divergence_matrix(a, b, kind)
        for i in range(4):
            for j in range(3):
                assert M[i, j] == pytest.approx(divergence(a[i], b[j], kind), rel=1e-10, abs=1e-12)
    mask = np.zeros((4, 3), dtype=bool)
    mask[1, 2] = True
    M = divergence_matrix(a, b, "jsd", mask)
    assert np.isfinite(M[1, 2]) and np.isinf(M).sum() == 11


def test_parse_kind():
    assert DivergenceKind.parse("CSD") is DivergenceKind.CSD
    with pytest.raises(ValueError):
        DivergenceKind.parse("hellinger")


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1))
def test_kld_bernoulli_properties(r1, r2):
    val = kld_bernoulli(r1, r2)
    assert val >= 0
    if r1 == r2:
        assert val == pytest.approx(0.0, abs=1e-12)


def test_kld_bernoulli_support():
    assert math.isinf(kld_bernoulli(0.5, 0.0))
    assert kld_bernoulli(0.0, 0.5) == pytest.approx(math.log(2))


def test_kld_jep():
    a, b = frozenset(), frozenset({Label(0, 0)})
    assert kld_jep({a: 0.5, b: 0.5}, {a: 0.5, b: 0.5}) == 0.0
    val, offender = kld_jep({a: 0.5, b: 0.5}, {a: 1.0}, return_offender=True)
    assert math.isinf(val) and offender == b


def test_gci_bernoulli_cost():
    pdf = GaussianMixture.single([0.0, 0.0], np.eye(2))
    t1, t2 = BernoulliTrack(Label(0, 0), 0.6, pdf), BernoulliTrack(Label(0, 1), 0.6, pdf)
    # identical tracks: (1-r) + r = 1, zero cost
    assert gci_divergence_bc(t1, t2, 0.5, 0.5) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        gci_divergence_bc(t1, t2, 0.5, 0.6)
