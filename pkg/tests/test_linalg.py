import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from spectral_meta import linalg, oracle
from spectral_meta.tasks import kappa_hat_closed_form, rng_for

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)
shapes = st.tuples(st.integers(1, 6), st.integers(1, 6))
matrices = shapes.flatmap(lambda s: arrays(np.float64, s, elements=finite))

# frozen from the oracle Gram eigensolver on rng_for(7, 4) 4x3
SEEDED_SIGMA = np.array([2.92322845, 1.20105353, 0.9106754])
SEEDED_KAPPA = 3.209956541692397
SEEDED_ENTROPY = -0.7112376402374903


def seeded():
    return rng_for(7, 4).standard_normal((4, 3))


def test_identity_sigma():
    np.testing.assert_array_equal(linalg.singular_values(np.eye(3)), np.ones(3))


def test_constructed_example_star_sigma():
    s = linalg.singular_values([[1, 0.02], [1, -0.02]])
    np.testing.assert_allclose(s, [math.sqrt(2), 0.02 * math.sqrt(2)], rtol=1e-13)


def test_seeded_against_oracle():
    M = seeded()
    np.testing.assert_allclose(linalg.singular_values(M), oracle.gram_svd(M), atol=1e-10)
    np.testing.assert_allclose(linalg.singular_values(M), SEEDED_SIGMA, rtol=1e-8)
    assert linalg.condition_number(M) == pytest.approx(SEEDED_KAPPA, rel=1e-12)
    assert linalg.singular_entropy(M) == pytest.approx(SEEDED_ENTROPY, rel=1e-12)


def test_condition_number_examples():
    assert linalg.condition_number(np.eye(4)) == 1.0
    assert linalg.condition_number([[1, 0.02], [1, -0.02]]) == pytest.approx(50.0, rel=1e-12)
    assert linalg.condition_number([[0, 1], [1, -0.02]]) == pytest.approx(kappa_hat_closed_form(0.02), rel=1e-12)


def test_condition_number_floor_and_flag():
    kappa, flag = linalg.condition_number(np.diag([2.0, 0.0]), with_flag=True)
    assert flag and kappa == 2.0 / linalg.KAPPA_FLOOR
    assert linalg.condition_number(np.diag([2.0, 0.0]), floor=0.0) == np.inf
    assert linalg.condition_number(np.diag([4.0, 2.0, 1.0]), k_rank=2) == 2.0
    with pytest.raises(linalg.DomainError):
        linalg.condition_number(np.eye(2), k_rank=3)


def test_frobenius():
    assert linalg.frobenius_norm(np.zeros((3, 2))) == 0.0
    assert linalg.frobenius_norm(np.eye(5)) == pytest.approx(math.sqrt(5), rel=1e-15)
    M = rng_for(1, 4).standard_normal((3, 3))
    assert linalg.frobenius_norm(M) == pytest.approx(math.sqrt(np.sum(linalg.singular_values(M) ** 2)), rel=1e-12)


def test_singular_entropy_examples():
    assert linalg.singular_entropy(np.eye(3)) == pytest.approx(-math.log(3), rel=1e-15)
    assert linalg.singular_entropy(7.5 * np.eye(4)) == pytest.approx(-math.log(4), rel=1e-15)
    assert linalg.entropy_of_sigma(np.array([10.0, 0.0])) == pytest.approx(
        oracle.softmax_entropy_hp([10.0, 0.0]), rel=1e-13)


def test_singular_value_gradient_diag():
    np.testing.assert_array_equal(linalg.singular_value_gradient(np.diag([3.0, 1.0]), 0), np.diag([1.0, 0.0]))
    np.testing.assert_array_equal(linalg.singular_value_gradient(np.diag([3.0, 1.0]), 1), np.diag([0.0, 1.0]))
    _, tie = linalg.singular_value_gradient(np.eye(2), 0, with_flag=True)
    assert tie
    with pytest.raises(linalg.DomainError):
        linalg.singular_value_gradient(np.eye(2), 2)


@pytest.mark.parametrize("i", [0, 1, 2])
def test_singular_value_gradient_fd(i):
    M = rng_for(2, 4).standard_normal((3, 3))
    fd = oracle.fd_gradient(lambda X: linalg.singular_values(X)[i], M, oracle.FdConfig(1e-6))
    G = linalg.singular_value_gradient(M, i)
    assert np.max(np.abs(G - fd)) / np.max(np.abs(fd)) <= 1e-5


def test_rejects_bad_input():
    with pytest.raises(linalg.DomainError):
        linalg.svd(np.array([[np.nan, 1.0]]))
    with pytest.raises(linalg.DomainError):
        linalg.svd(np.zeros((0, 3)))


def test_sign_convention_deterministic():
    M = rng_for(3, 4).standard_normal((5, 3))
    a, b = linalg.svd(M), linalg.svd(M.copy())
    np.testing.assert_array_equal(a.u, b.u)
    for j in range(3):
        col = a.u[:, j]
        assert col[np.flatnonzero(np.abs(col) > 1e-12)[0]] > 0


def test_matrix_csv_roundtrip(tmp_path):
    M = rng_for(4, 4).standard_normal((3, 2))
    linalg.write_matrix_csv(M, tmp_path / "m.csv")
    np.testing.assert_array_equal(linalg.read_matrix_csv(tmp_path / "m.csv"), M)


@given(matrices)
def test_reconstruction_and_orthonormality(M):
    res = linalg.svd(M)
    scale = max(1.0, np.max(np.abs(M)))
    assert np.max(np.abs(res.reconstruct() - M)) <= 1e-12 * scale * 10
    r = res.rank_dim
    assert np.max(np.abs(res.u.T @ res.u - np.eye(r))) <= 1e-10
    assert np.max(np.abs(res.v.T @ res.v - np.eye(r))) <= 1e-10
    assert np.all(np.diff(res.sigma) <= 0) and np.all(res.sigma >= 0)


@given(matrices, st.floats(0.01, 100))
def test_scale_equivariance(M, c):
    s = linalg.singular_values(M)
    np.testing.assert_allclose(linalg.singular_values(c * M), c * s, rtol=1e-12, atol=1e-12 * c * max(s[0], 1))


@given(st.integers(0, 10_000), st.integers(1, 6), st.integers(1, 6))
def test_orthogonal_invariance(seed, m, n):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((m, n))
    Q, _ = np.linalg.qr(rng.standard_normal((m, m)))
    assert linalg.condition_number(Q @ M) == pytest.approx(linalg.condition_number(M), rel=1e-10)
    assert linalg.condition_number(M) >= 1.0


@given(matrices)
def test_frobenius_identity_and_entropy_bounds(M):
    s = linalg.singular_values(M)
    fro2 = linalg.frobenius_norm(M) ** 2
    assert fro2 == pytest.approx(np.sum(s ** 2), rel=1e-10, abs=1e-300)
    h = linalg.singular_entropy(M)
    assert -math.log(s.size) - 1e-12 <= h <= 1e-12
