import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctgsm.gmm import (
    _spread_seeds,
    Gmm,
    decode_modes,
    decode_value,
    encode_modes,
    encode_value,
    fit_gmm,
    log_likelihood,
    pdf,
    posterior,
)

from .oracles import naive_em


def normal_pdf(x, mu, var):
    return math.exp(-(x - mu) ** 2 / (2 * var)) / math.sqrt(2 * math.pi * var)


def test_pdf_standard_normal_at_mean():
    g = Gmm([1.0], [0.0], [1.0])
    assert pdf(g, 0.0) == pytest.approx(0.398942, abs=1e-6)


def test_pdf_symmetric_components_contribute_equally():
    g = Gmm([0.5, 0.5], [-2.0, 2.0], [1.5, 1.5])
    r = posterior(g, 0.0)
    assert r[0] == r[1] == 0.5
    assert pdf(g, 0.0) == pytest.approx(normal_pdf(0.0, 2.0, 1.5), rel=1e-12)


def test_pdf_integrates_to_one():
    g = Gmm([0.2, 0.5, 0.3], [-3.0, 0.5, 4.0], [0.5, 1.0, 2.0])
    sd = math.sqrt(2.0)
    grid = np.linspace(-3.0 - 10 * sd, 4.0 + 10 * sd, 200_001)
    dens = pdf(g, grid)
    assert np.all(dens >= 0)
    assert np.trapezoid(dens, grid) == pytest.approx(1.0, abs=1e-6)


def test_log_likelihood_matches_direct_sum():
    g = Gmm([0.3, 0.7], [0.0, 5.0], [1.0, 4.0])
    xs = [-1.0, 0.3, 2.2, 6.0]
    direct = sum(math.log(0.3 * normal_pdf(x, 0, 1) + 0.7 * normal_pdf(x, 5, 4)) for x in xs)
    assert log_likelihood(g, xs) == pytest.approx(direct, rel=1e-12)


def test_posterior_cases():
    g = Gmm([0.5, 0.5], [-1.0, 1.0], [1.0, 1.0])
    np.testing.assert_allclose(posterior(g, 0.0), [0.5, 0.5], atol=1e-15)
    far = Gmm([0.5, 0.5], [0.0, 10.0], [1.0, 1.0])
    assert posterior(far, 0.0)[0] > 0.999
    assert posterior(Gmm([1.0], [3.0], [2.0]), 100.0).tolist() == [1.0]
    # deep tail where both densities underflow
    r = posterior(far, -1e4)
    assert np.isfinite(r).all() and r.sum() == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.floats(-1e3, 1e3), st.integers(0, 1000))
def test_posterior_sums_to_one(x, seed):
    rng = np.random.default_rng(seed)
    w = rng.dirichlet(np.ones(4))
    g = Gmm(w, rng.normal(0, 10, 4), rng.uniform(0.01, 5, 4))
    assert posterior(g, x).sum() == pytest.approx(1.0, abs=1e-12)


def test_fit_k1_closed_form():
    x = np.random.default_rng(0).normal(3.0, 2.0, 400)
    g = fit_gmm(x, K=1)
    assert g.means[0] == pytest.approx(x.mean(), rel=1e-12)
    assert g.variances[0] == pytest.approx(x.var(), rel=1e-12)
    const = fit_gmm(np.full(10, 7.0), K=1)
    assert const.variances[0] == 1e-6


def test_fit_two_clusters_matches_reference_em():
    rng = np.random.default_rng(1)
    x = np.r_[rng.normal(0, 1, 500), rng.normal(100, 1, 500)]
    g, hist = fit_gmm(x, K=2, seed=5, return_history=True)
    assert sorted(np.round(g.means)) == [0, 100]
    assert np.all(np.abs(np.sort(g.means) - [0, 100]) < 0.5)
    # the same starting point run through a plain-Python EM for the same number of steps
    start = _spread_seeds(x, 2, np.random.default_rng(5))
    m, v, w = naive_em(x, x[start], [x.var()] * 2, [0.5, 0.5], len(hist) - 1)
    np.testing.assert_allclose(g.means, m, rtol=1e-9)
    np.testing.assert_allclose(g.variances, v, rtol=1e-9)
    np.testing.assert_allclose(g.weights, w, rtol=1e-9)


def test_fit_two_clusters_any_seed():
    rng = np.random.default_rng(2)
    x = np.r_[rng.normal(0, 1, 500), rng.normal(100, 1, 500)]
    for seed in range(20):
        assert np.all(np.abs(np.sort(fit_gmm(x, K=2, seed=seed).means) - [0, 100]) < 0.5)


def test_initial_means_are_distinct_samples():
    x = np.r_[np.zeros(50), np.ones(3), [7.0]]
    idx = _spread_seeds(x, 3, np.random.default_rng(0))
    assert sorted(x[idx]) == [0.0, 1.0, 7.0]


def test_fit_errors_and_collapse():
    with pytest.raises(ValueError):
        fit_gmm([1.0, 2.0], K=3)
    g = fit_gmm(np.full(20, 1.5), K=3)
    assert np.all(g.variances >= 1e-6)
    assert g.weights.sum() == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("K", [1, 2, 5, 10])
def test_em_log_likelihood_non_decreasing(K):
    rng = np.random.default_rng(K)
    for _ in range(10):
        x = np.r_[rng.normal(0, 1, 60), rng.exponential(3, 60)]
        g, hist = fit_gmm(x, K=K, seed=int(rng.integers(1 << 30)), return_history=True)
        assert np.all(np.diff(hist) >= -1e-9)
        assert np.all(g.weights >= 0) and g.weights.sum() == pytest.approx(1.0, abs=1e-9)


def test_encode_centering_and_roundtrip():
    g = Gmm([0.5, 0.5], [0.0, 10.0], [1.0, 4.0])
    enc = encode_value(g, 10.0, argmax=True)
    assert enc.mode.tolist() == [0.0, 1.0] and enc.alpha == 0.0
    for x in (-3.9, -0.2, 0.0, 2.5, 7.0, 12.3):
        enc = encode_value(g, x, rng=np.random.default_rng(0))
        k = int(np.argmax(enc.mode))
        if abs(x - g.means[k]) <= 4 * g.stds[k]:
            assert decode_value(g, enc) == pytest.approx(x, abs=1e-9)


def test_encode_clamps_far_values():
    g = Gmm([1.0], [0.0], [1.0])
    enc = encode_value(g, 50.0, argmax=True)
    assert enc.alpha == 1.0
    assert decode_value(g, enc) == 4.0
    assert encode_value(g, -50.0, argmax=True).alpha == -1.0


def test_posterior_sampling_follows_responsibilities():
    g = Gmm([0.5, 0.5], [-0.5, 0.5], [1.0, 1.0])
    x = np.full(20000, 0.3)
    k, _ = encode_modes(g, x, rng=np.random.default_rng(3))
    expected = posterior(g, 0.3)[1]
    se = math.sqrt(expected * (1 - expected) / x.size)
    assert abs(k.mean() - expected) < 4 * se
    with pytest.raises(ValueError):
        encode_modes(g, x)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=1, max_size=20), st.integers(0, 50))
def test_vector_roundtrip_inside_band(xs, seed):
    rng = np.random.default_rng(seed)
    g = Gmm(rng.dirichlet(np.ones(3)), rng.normal(0, 20, 3), rng.uniform(0.5, 30, 3))
    k, a = encode_modes(g, xs, rng=rng)
    back = decode_modes(g, k, a)
    inside = np.abs(np.asarray(xs) - g.means[k]) <= 4 * g.stds[k]
    np.testing.assert_allclose(back[inside], np.asarray(xs)[inside], atol=1e-9)
    assert np.all(np.abs(a) <= 1)


def test_gmm_validation_and_json():
    with pytest.raises(ValueError):
        Gmm([0.6, 0.6], [0, 1], [1, 1])
    with pytest.raises(ValueError):
        Gmm([1.0], [0.0], [0.0])
    g = Gmm([0.25, 0.75], [1.0, -1.0], [0.5, 2.0])
    back = Gmm.from_dict(g.to_dict())
    assert back.means.tolist() == g.means.tolist()
