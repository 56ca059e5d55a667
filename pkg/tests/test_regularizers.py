import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spectral_meta import gradcheck, oracle, regularizers
from spectral_meta.regularizers import PenaltyConfig, entropy_penalty, kappa_penalty, spectral_penalty
from spectral_meta.tasks import rng_for

SEEDED_PENALTY = 14.02708034621922  # kappa + ||W||_F^2 on rng_for(7, 4) 4x3, checked by the Gram oracle


def test_zero_lambdas():
    W = rng_for(0, 4).standard_normal((3, 3))
    p = spectral_penalty(W, PenaltyConfig(0.0, 0.0))
    assert p.value == 0.0 and np.all(p.gradient == 0)
    e = entropy_penalty(W, 0.0)
    assert e.value == 0.0 and np.all(e.gradient == 0)


def test_identity_penalty():
    p = spectral_penalty(np.eye(3), PenaltyConfig(1.0, 1.0))
    assert p.value == pytest.approx(4.0, rel=1e-15)
    frob_only = spectral_penalty(np.eye(3), PenaltyConfig(0.0, 1.0))
    np.testing.assert_array_equal(frob_only.gradient, 2 * np.eye(3))


def test_frozen_seeded_value():
    W = rng_for(7, 4).standard_normal((4, 3))
    assert spectral_penalty(W, PenaltyConfig()).value == pytest.approx(SEEDED_PENALTY, rel=1e-12)
    assert SEEDED_PENALTY == pytest.approx(oracle.gram_condition_number(W) + float(np.sum(W * W)), rel=1e-12)


def test_fd_checks():
    assert gradcheck.check_spectral_penalty().max_rel_err <= 1e-5
    assert gradcheck.check_entropy_penalty().max_rel_err <= 1e-5


def test_equal_sigma_entropy():
    W = 2.0 * np.eye(3)
    e = entropy_penalty(W, 0.5)
    assert e.value == pytest.approx(0.5 * -math.log(3), rel=1e-15)
    # scaling keeps sigma equal and is a direction with zero derivative
    assert abs(np.sum(e.gradient * W)) <= 1e-14


def test_floor_marks_degenerate():
    p = spectral_penalty(np.diag([1.0, 0.0]), PenaltyConfig(1.0, 0.0))
    assert p.degenerate and p.value == pytest.approx(1e8) and np.all(p.gradient == 0)


def test_config_validation():
    with pytest.raises(ValueError):
        PenaltyConfig(-1.0, 0.0)
    with pytest.raises(ValueError):
        PenaltyConfig(float("nan"), 0.0)


@given(st.integers(0, 100_000), st.floats(0.1, 10))
def test_kappa_term_scale_invariant_and_euler(seed, c):
    W = np.random.default_rng(seed).standard_normal((4, 3))
    p = kappa_penalty(W, 1.0)
    assert kappa_penalty(c * W, 1.0).value == pytest.approx(p.value, rel=1e-10)
    assert abs(np.sum(p.gradient * W)) <= 1e-8 * max(1.0, p.value)


@given(st.integers(0, 100_000))
def test_frob_gradient_exact(seed):
    W = np.random.default_rng(seed).standard_normal((3, 4))
    np.testing.assert_array_equal(spectral_penalty(W, PenaltyConfig(0.0, 0.7)).gradient, 2.0 * 0.7 * W)


def test_descent_along_negative_gradient():
    for seed in range(100):
        W = rng_for(seed, 4, 11).standard_normal((4, 3))
        for fn in (lambda M: spectral_penalty(M, PenaltyConfig()), lambda M: entropy_penalty(M, 1.0)):
            p = fn(W)
            step = 1e-4 / max(np.linalg.norm(p.gradient), 1e-12)
            assert fn(W - step * p.gradient).value < p.value
