from pathlib import Path

import numpy as np
import pytest

from spectral_meta import linalg, oracle
from spectral_meta.tasks import build_prop3, rng_for


def test_fd_trivial():
    X = rng_for(0, 4).standard_normal((3, 2))
    np.testing.assert_allclose(oracle.fd_gradient(lambda A: np.sum(A * A), X), 2 * X, atol=1e-8)
    S = rng_for(1, 4).standard_normal((3, 3))
    np.testing.assert_allclose(oracle.fd_gradient(lambda A: np.sum(A), S), np.ones((3, 3)), atol=1e-10)


def test_fd_sigma1_matches_u1v1():
    X = rng_for(2, 4).standard_normal((4, 3))
    fd = oracle.fd_gradient(lambda A: linalg.singular_values(A)[0], X, oracle.FdConfig(1e-6))
    np.testing.assert_allclose(fd, linalg.singular_value_gradient(X, 0), atol=1e-5)


def test_fd_rejects_nonfinite():
    with pytest.raises(ValueError), np.errstate(invalid="ignore", divide="ignore"):
        oracle.fd_gradient(lambda A: np.log(A[0, 0]), np.zeros((1, 1)))
    with pytest.raises(ValueError):
        oracle.FdConfig(0.0)


def test_gram_svd_examples():
    np.testing.assert_allclose(oracle.gram_svd(np.eye(3)), np.ones(3), rtol=1e-15)
    eps = 0.02
    np.testing.assert_allclose(oracle.gram_svd(build_prop3(eps).w_star), [np.sqrt(2), np.sqrt(2) * eps], rtol=1e-12)


def test_gram_svd_cross_check():
    for seed in range(20):
        M = rng_for(seed, 4, 9).standard_normal((5, 4))
        np.testing.assert_allclose(oracle.gram_svd(M), linalg.singular_values(M), atol=1e-10)


def test_least_squares():
    y = np.array([1.0, -2.0, 3.0])
    np.testing.assert_allclose(oracle.least_squares(np.eye(3), y), y, rtol=1e-15)
    rng = rng_for(3, 4)
    X = rng.standard_normal((20, 4))
    w = rng.standard_normal(4)
    np.testing.assert_allclose(oracle.least_squares(X, X @ w), w, atol=1e-10)
    y = rng.standard_normal(20)
    w_hat = oracle.least_squares(X, y)
    assert np.max(np.abs(X.T @ (y - X @ w_hat))) <= 1e-8


def test_gaussian_risk():
    assert oracle.gaussian_risk_closed_form([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert oracle.gaussian_risk_closed_form([1.0, 0.0], [0.0, 1.0]) == 2.0


def test_naive_mean_and_entropy():
    np.testing.assert_array_equal(oracle.naive_mean_rows([[1.0, 2.0], [3.0, 4.0]]), [2.0, 3.0])
    assert oracle.softmax_entropy_hp([0.0, 0.0]) == pytest.approx(-np.log(2), rel=1e-15)


def test_oracle_is_independent():
    import spectral_meta.oracle as mod
    src = Path(mod.__file__).read_text()
    for name in ("linalg", "encoder", "mtr_linear"):
        assert f"import {name}" not in src and f"from .{name}" not in src and f"from . import {name}" not in src
