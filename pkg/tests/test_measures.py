import numpy as np
import pytest
from scipy import stats

from wotrisk.measures import (Dirac, DiffusionMarginal, Empirical, Gaussian, LogNormalBS,
                              diffusion_uncorrelated, make_measure, moment, sample)


def test_dirac_sample():
    X = sample(Dirac([1.0, 1.0]), 3, seed=123)
    np.testing.assert_array_equal(X, [[1, 1], [1, 1], [1, 1]])


def test_lognormal_mean():
    X = sample(LogNormalBS(1.0, 0.2, 0.5), 10**6, seed=1)
    assert 0.9975 <= X.mean() <= 1.0025


def test_gaussian_mean():
    X = sample(Gaussian([0.75, 0.25], np.eye(2)), 10**6, seed=2)
    np.testing.assert_allclose(X.mean(axis=0), [0.75, 0.25], atol=0.004)


def test_lognormal_ks():
    m = LogNormalBS(1.0, 0.2, 0.5)
    X = sample(m, 10**6, seed=3)[:, 0]
    assert stats.kstest(X, m.cdf).statistic < 0.002


def test_diffusion_covariance():
    sigma = np.array([[0.30, 0.0], [0.05, 0.20]])
    m = DiffusionMarginal([1.0, 1.0], sigma, 2.0)
    X = sample(m, 10**6, seed=4)
    want = 2.0 * sigma @ sigma.T
    got = np.cov(X.T)
    assert np.linalg.norm(got - want) / np.linalg.norm(want) < 0.02


def test_seed_determinism_and_prefix():
    for m in (LogNormalBS([1.0, 2.0], 0.3, 1.0), Gaussian([0.0, 1.0, 2.0], np.eye(3)),
              diffusion_uncorrelated(4)):
        a = sample(m, 1000, 9)
        np.testing.assert_array_equal(a, sample(m, 1000, 9))
        np.testing.assert_array_equal(a, sample(m, 2000, 9)[:1000])
        assert not np.array_equal(a, sample(m, 1000, 10))


def test_lognormal_multi_asset_mean():
    X = sample(LogNormalBS([1.0, 2.0], 0.2, 0.5, corr=[[1, 0.5], [0.5, 1]]), 400_000, 5)
    se = X.std(axis=0) / np.sqrt(len(X))
    assert np.all(np.abs(X.mean(axis=0) - [1.0, 2.0]) < 4 * se)


def test_errors():
    with pytest.raises(ValueError):
        Gaussian([0.0, 0.0], [[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(ValueError):
        sample(Dirac([0.0]), 0, 1)
    with pytest.raises(ValueError):
        LogNormalBS(1.0, -0.2, 0.5)


def test_moment_examples():
    assert moment(Dirac([3.0, 4.0]), 2).value == 25.0
    assert moment(LogNormalBS(1.0, 0.2, 0.5), 1).value == pytest.approx(1.0, abs=1e-15)
    assert moment(Gaussian([0.0, 0.0], np.eye(2)), 2).value == pytest.approx(2.0)


def test_moment_monte_carlo_stable():
    m = DiffusionMarginal([1.0, 1.0], [[0.3, 0.0], [0.05, 0.2]], 1.0)
    a = moment(m, 3, n=100_000, seed=1)
    b = moment(m, 3, n=200_000, seed=2)
    assert np.isfinite(a.value) and a.stderr > 0
    assert abs(a.value - b.value) < 4 * np.hypot(a.stderr, b.stderr)


def test_diffusion_default_is_independent():
    m = diffusion_uncorrelated(3, vol=0.2, maturity=1.0)
    np.testing.assert_allclose(m.covariance, 0.04 * np.eye(3))


def test_empirical_csv(tmp_path):
    p = tmp_path / "pts.csv"
    p.write_text("a,b\n1,2\n3,4\n")
    m = Empirical.from_csv(p)
    np.testing.assert_array_equal(m.points, [[1, 2], [3, 4]])
    p.write_text("1,2\n3,4\n5,6\n")
    assert len(Empirical.from_csv(p).points) == 3
    X = sample(m, 50, 0)
    assert set(map(tuple, X)) <= {(1.0, 2.0), (3.0, 4.0)}


def test_make_measure():
    m = make_measure({"kind": "lognormal_bs", "spot": 1.0, "vol": 0.2, "maturity": 0.5})
    assert isinstance(m, LogNormalBS)
    m = make_measure({"kind": "diffusion", "d": 3})
    assert m.dim == 3
    with pytest.raises(ValueError):
        make_measure({"kind": "gaussian", "mean": [0.0], "colour": 1})
    with pytest.raises(ValueError):
        make_measure({"kind": "levy"})
