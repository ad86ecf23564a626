import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from vfgnn.dp import (DpParams, PrivacyAccountant, bayes_risk_james_stein, clip, compose,
                      gaussian_publish, james_stein_publish, james_stein_shrink, mse_gaussian,
                      mse_james_stein, publish, sigma_from_eps)


def test_sigma_examples():
    assert sigma_from_eps(1.0, 1e-4) == pytest.approx(4.3436, abs=1e-4)
    assert sigma_from_eps(2.0, 1e-4) == pytest.approx(2.1718, abs=1e-4)
    assert sigma_from_eps(math.inf, 1e-4) == 0.0
    for bad in ((0.0, 1e-4), (-1.0, 1e-4), (1.0, 0.0), (1.0, 1.0)):
        with pytest.raises(ValueError):
            sigma_from_eps(*bad)


def test_clip_examples():
    assert np.allclose(clip(np.array([3.0, 4.0]), 1.0), [0.6, 0.8])
    assert clip(np.array([0.1, 0.0]), 1.0).tolist() == [0.1, 0.0]
    assert not clip(np.zeros(3), 1.0).any()
    assert clip(np.array([30.0, 40.0]), math.inf).tolist() == [30.0, 40.0]
    with pytest.raises(ValueError):
        clip(np.ones(2), 0.0)


@settings(max_examples=50)
@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=8), st.floats(1e-3, 1e3))
def test_clip_properties(v, c):
    x = np.array(v)
    out = clip(x, c)
    assert np.linalg.norm(out) <= c * (1 + 1e-12)
    if np.linalg.norm(x) <= c:
        assert np.array_equal(out, x)
    elif np.linalg.norm(x) > 0:
        assert np.allclose(out / np.linalg.norm(out), x / np.linalg.norm(x))


def test_noiseless_publish_is_clip(rng):
    x = rng.normal(size=(5, 6)) * 3
    p = DpParams(epsilon=math.inf, clip=1.0)
    assert np.array_equal(gaussian_publish(x, p, rng), clip(x, 1.0))
    assert np.array_equal(james_stein_publish(x, DpParams(clip=1.0, mechanism="james_stein"), rng), clip(x, 1.0))


def test_noise_std_parameterization():
    p = DpParams(epsilon=2.0, delta=1e-5, clip=3.0)
    assert p.noise_std == sigma_from_eps(2.0, 1e-5) * 3.0
    x = np.zeros((1, 4))
    a = gaussian_publish(x, p, np.random.default_rng(5))
    b = np.random.default_rng(5).standard_normal((1, 4)) * p.noise_std
    assert np.array_equal(a, b)


def _params_for_sigma(sigma, c=1.0, mech="gaussian"):
    eps = math.sqrt(2 * math.log(1.25 / 1e-4)) / sigma
    return DpParams(epsilon=eps, delta=1e-4, clip=c, mechanism=mech)


def test_gaussian_mse_monte_carlo():
    r = np.random.default_rng(0)
    p = _params_for_sigma(2.0)
    x = np.full((100_000, 10), 0.1)
    noisy = gaussian_publish(x, p, r)
    err = np.sum((noisy - clip(x, 1.0)) ** 2, axis=1).mean()
    assert abs(err / mse_gaussian(10, 2.0, 1.0) - 1) < 0.02
    var = (noisy - clip(x, 1.0)).var(axis=0)
    assert np.all(np.abs(var / 4.0 - 1) < 0.03)


def test_james_stein_factor_example():
    noisy = np.array([2.0, 2.0, 0.0, 0.0])
    assert np.allclose(james_stein_shrink(noisy, 1.0), 0.75 * noisy)
    assert not james_stein_shrink(np.zeros(4), 1.0).any()
    with pytest.raises(ValueError):
        james_stein_shrink(np.ones(2), 1.0)
    with pytest.raises(ValueError):
        DpParams(mechanism="laplace")


def test_james_stein_beats_gaussian_d64():
    r = np.random.default_rng(1)
    c = 100.0
    p = _params_for_sigma(1.0 / c, c)
    x = r.normal(size=(100_000, 64))
    g = gaussian_publish(x, p, r)
    js = james_stein_shrink(g, p.noise_std)
    assert np.sum((js - x) ** 2, 1).mean() < np.sum((g - x) ** 2, 1).mean()


def test_mse_formula_examples():
    assert mse_james_stein(10, 1.0, 1.0, 0.0) == pytest.approx(3.6)
    assert mse_james_stein(3, 1.0, 1.0, 1e9) == pytest.approx(3.0)
    with pytest.raises(ValueError):
        mse_james_stein(2, 1.0, 1.0, 1.0)
    for d in (3, 8, 64):
        for s in (0.5, 1.0, 2.0):
            for w in (0.0, 0.5, 2.0):
                assert mse_james_stein(d, s, 1.0, w) <= mse_gaussian(d, s, 1.0)
                assert bayes_risk_james_stein(d, s, 1.0, w) <= mse_gaussian(d, s, 1.0)


def test_mse_james_stein_monte_carlo_d64():
    r = np.random.default_rng(2)
    c = 100.0
    p = _params_for_sigma(1.0 / c, c, "james_stein")
    x = r.normal(size=(100_000, 64))
    err = np.sum((james_stein_publish(x, p, r) - x) ** 2, axis=1).mean()
    assert abs(err / mse_james_stein(64, 1.0 / c, c, 1.0) - 1) < 0.03


@pytest.mark.parametrize("s", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("w", [0.5, 1.0, 2.0])
def test_james_stein_dominance(s, w):
    r = np.random.default_rng(int(10 * s + w * 100))
    c = 1000.0
    p = _params_for_sigma(s / c, c)
    x = w * r.normal(size=(100_000, 8))
    g = gaussian_publish(x, p, r)
    js = james_stein_shrink(g, p.noise_std)
    diff = np.sum((g - x) ** 2, 1) - np.sum((js - x) ** 2, 1)
    assert stats.ttest_1samp(diff, 0.0, alternative="greater").pvalue < 0.01


def test_publish_dispatch(rng):
    x = rng.normal(size=(3, 5))
    p = _params_for_sigma(1.0, 1.0, "james_stein")
    assert np.array_equal(publish(x, p, np.random.default_rng(0)), james_stein_publish(x, p, np.random.default_rng(0)))


def test_compose_examples():
    acc = PrivacyAccountant(1.0, q=0.1)
    assert acc.total == 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        after = compose(acc, 100)
    assert after.total == pytest.approx(1.0)
    assert compose(acc, 400, warn=False).total == pytest.approx(2 * after.total)
    assert PrivacyAccountant(math.inf).compose(5).total == math.inf


def test_compose_guard_warns():
    with pytest.warns(RuntimeWarning):
        PrivacyAccountant(8.0, q=1.0).compose(1)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        PrivacyAccountant(0.5, q=1.0).compose(1)


@given(st.floats(0.01, 100), st.floats(0.01, 1.0), st.integers(0, 500), st.integers(0, 500))
def test_compose_monotone(eps, q, a, b):
    acc = PrivacyAccountant(eps, q=q)
    x = acc.compose(a, warn=False)
    y = x.compose(b, warn=False)
    assert y.total >= x.total
    assert x.compose(b, warn=False) == y
