import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spectral_meta import linalg, tasks
from spectral_meta.tasks import GaussianFamily, build_prop3, kappa_hat_closed_form, rng_for


def test_split_seed_streams_differ():
    a = rng_for(0, tasks.STREAM_TRAIN, 5).standard_normal(3)
    b = rng_for(0, tasks.STREAM_TEST, 5).standard_normal(3)
    c = rng_for(0, tasks.STREAM_TRAIN, 5).standard_normal(3)
    assert not np.array_equal(a, b)
    np.testing.assert_array_equal(a, c)


def test_linear_task_noiseless_e1():
    X, y = tasks.task_sample(tasks.LinearTask(np.array([1.0, 0.0, 0.0])), rng_for(0, 4), 20, noise=False)
    np.testing.assert_array_equal(y, X[:, 0])


def test_linear_task_determinism():
    def draw():
        rng = rng_for(1, 4)
        t = tasks.sample_linear_task(rng, 4)
        return (t.theta, *tasks.task_sample(t, rng, 10))
    for a, b in zip(draw(), draw()):
        np.testing.assert_array_equal(a, b)


def test_theta_moments():
    rng = rng_for(2, 4)
    thetas = np.array([tasks.sample_linear_task(rng, 3).theta for _ in range(100_000)])
    assert np.all(np.abs(thetas.mean(axis=0)) <= 0.02)
    assert np.all(np.abs(thetas.var(axis=0) - 1.0) <= 0.05)


def test_whitened_sample_is_exact():
    X, y = tasks.task_sample(tasks.LinearTask(np.array([1.0, 2.0])), rng_for(3, 4), 50, whiten=True)
    np.testing.assert_allclose(X.T @ X / 50, np.eye(2), atol=1e-12)
    np.testing.assert_allclose(X.T @ (y - X @ np.array([1.0, 2.0])), 0.0, atol=1e-10)


def test_episode_shapes():
    ep = tasks.sample_episode(GaussianFamily(), 2, 1, 1, rng_for(4, 4))
    assert ep.support_x.shape == (2, 16) and ep.query_x.shape == (2, 16)
    assert list(ep.support_y) == [0, 1] and list(ep.query_y) == [0, 1]


def test_noise_free_points_are_means():
    fam = GaussianFamily(noise_std=0.0)
    ep = tasks.sample_episode(fam, 3, 2, 2, rng_for(5, 4))
    for label, cls in enumerate(ep.classes):
        np.testing.assert_array_equal(ep.support_x[ep.support_y == label], np.tile(fam.means[cls], (2, 1)))


def test_nearest_mean_perfect_at_low_noise():
    fam = GaussianFamily(noise_std=0.04)
    for i in range(100):
        ep = tasks.sample_episode(fam, 5, 5, 3, rng_for(6, 4, i))
        means = np.array([ep.support_x[ep.support_y == c].mean(axis=0) for c in range(5)])
        d = ((ep.query_x[:, None, :] - means[None]) ** 2).sum(-1)
        assert np.all(d.argmin(axis=1) == ep.query_y)


def test_class_splits_are_disjoint():
    fam = GaussianFamily()
    assert set(fam.classes("train")).isdisjoint(fam.classes("test"))
    ep = tasks.sample_episode(fam, 5, 1, 2, rng_for(7, 4), split="test")
    assert set(ep.classes) <= set(fam.classes("test"))
    with pytest.raises(ValueError):
        tasks.sample_episode(GaussianFamily(n_classes=4, n_test_classes=1), 5, 1, 1, rng_for(0, 4))


@given(st.integers(0, 100_000), st.integers(1, 5), st.integers(1, 3), st.integers(1, 3))
def test_episode_balance(seed, n_way, k_shot, n_query):
    ep = tasks.sample_episode(GaussianFamily(), n_way, k_shot, n_query, np.random.default_rng(seed))
    assert np.all(np.bincount(ep.support_y, minlength=n_way) == k_shot)
    assert np.all(np.bincount(ep.query_y, minlength=n_way) == n_query)
    assert len(set(ep.classes)) == n_way


def test_pool_episodes_disjoint_and_balanced(tmp_path):
    fam = GaussianFamily(n_classes=8, n_test_classes=2)
    fam.export_pool(tmp_path / "pool.csv", 6, rng_for(8, 4))
    pool = tasks.load_dataset(tmp_path / "pool.csv")
    for i in range(1000):
        ep = pool.sample_episode(3, 2, 3, rng_for(8, 4, i))
        assert set(ep.support_ids).isdisjoint(ep.query_ids)
        assert np.all(np.bincount(ep.support_y, minlength=3) == 2)


def test_dataset_toy_and_errors(tmp_path):
    p = tmp_path / "toy.csv"
    p.write_text("label,f1,f2\n0,1,2\n0,3,4\n1,5,6\n1,7,8\n")
    pool = tasks.load_dataset(p)
    assert pool.size == 4 and pool.labels == [0, 1]
    bad = tmp_path / "bad.csv"
    bad.write_text("label,f1,f2,f3,f4\n0,1,2,3,4\n1,2,3\n")
    with pytest.raises(tasks.DatasetError, match=":3:"):
        tasks.load_dataset(bad)
    with pytest.raises(tasks.CapacityError):
        pool.sample_episode(2, 2, 1, rng_for(0, 4))


def test_dataset_roundtrip(tmp_path):
    fam = GaussianFamily(n_classes=6, n_test_classes=1)
    fam.export_pool(tmp_path / "a.csv", 5, rng_for(9, 4))
    fam.export_pool(tmp_path / "b.csv", 5, rng_for(9, 4))
    a, b = tasks.load_dataset(tmp_path / "a.csv"), tasks.load_dataset(tmp_path / "b.csv")
    assert a.sample_episode(3, 2, 2, rng_for(1, 4)).same_as(b.sample_episode(3, 2, 2, rng_for(1, 4)))


def test_constructed_example_examples():
    c = build_prop3(0.02)
    assert linalg.condition_number(c.w_star) == pytest.approx(50.0, rel=1e-12)
    assert linalg.condition_number(c.w_hat) == pytest.approx(kappa_hat_closed_form(0.02), rel=1e-10)
    kappas = [linalg.condition_number(build_prop3(e).w_hat) for e in (0.5, 0.1, 0.02, 0.001)]
    assert all(b < a for a, b in zip(kappas, kappas[1:])) and kappas[-1] > 1.0


def test_constructed_example_second_task_points_exact():
    eps, k = 0.02, 2.0
    w = np.array([1.0, -eps])
    assert w @ np.array([1 + k * eps, k]) == 1.0
    assert w @ np.array([-1 + k * eps, k]) == -1.0
    c = build_prop3(eps, k_val=k)
    assert np.all(c.star_residuals[2:] == 0.0)


def test_constructed_example_residuals_verbatim_vs_corrected():
    eps, k = 0.1, 2.0
    verbatim = build_prop3(eps, k_val=k)
    assert verbatim.star_residuals[1] == pytest.approx(-(2 + 2 * k * eps), rel=1e-15)
    corrected = build_prop3(eps, k_val=k, corrected=True)
    assert np.all(np.abs(corrected.star_residuals) <= 1e-15)
    assert np.all(np.abs(corrected.hat_residuals) <= 1e-15)
    assert np.all(np.abs(verbatim.hat_residuals) <= 1e-15)


def test_constructed_example_exact_for_dyadic_eps():
    c = build_prop3(2.0 ** -20, corrected=True)
    assert np.all(c.star_residuals == 0.0) and np.all(c.hat_residuals == 0.0)


def test_colinear_thetas():
    th = tasks.colinear_thetas(rng_for(0, 4), 3, 2.0, 5, prefix=1)
    assert len(th) == 6
    for a, b in zip(th, th[1:]):
        np.testing.assert_array_equal(b, 2.0 * a)
