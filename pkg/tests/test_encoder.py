import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spectral_meta import encoder, oracle
from spectral_meta.encoder import SGD, Adam, EncoderParams
from spectral_meta.tasks import rng_for


def single_layer(W, activation="identity"):
    return EncoderParams([np.array(W, dtype=float)], [np.zeros(len(W))], activation)


def test_identity_layer_is_identity():
    x = np.array([0.5, -2.0, 3.0])
    emb, _ = encoder.forward(single_layer(np.eye(3)), x)
    np.testing.assert_array_equal(emb, x)


def test_relu_negative_identity_zero():
    emb, _ = encoder.forward(single_layer(-np.eye(3), "relu"), np.array([1.0, 2.0, 3.0]))
    np.testing.assert_array_equal(emb, np.zeros(3))


def test_linear_layer_is_matvec():
    W = rng_for(0, 4).standard_normal((2, 3))
    x = rng_for(1, 4).standard_normal(3)
    emb, _ = encoder.forward(single_layer(W), x)
    np.testing.assert_allclose(emb, W @ x, rtol=1e-15)


@pytest.mark.parametrize("activation", ["tanh", "relu", "identity"])
def test_forward_matches_oracle(activation):
    params = encoder.init_encoder(rng_for(2, 4), (4, 6, 3), activation)
    params = params.with_arrays([a + 0.1 for a in params.arrays()])
    x = rng_for(3, 4).standard_normal(4)
    emb, _ = encoder.forward(params, x)
    np.testing.assert_allclose(emb, oracle.mlp_forward(params.weights, params.biases, activation, x), atol=1e-14)


def test_backward_linear_case():
    W = rng_for(4, 4).standard_normal((2, 3))
    x = np.array([1.0, -1.0, 2.0])
    g = np.array([0.5, 3.0])
    _, tape = encoder.forward(single_layer(W), x)
    grads = encoder.backward(tape, g)
    np.testing.assert_allclose(grads.weights[0], np.outer(g, x))
    np.testing.assert_allclose(grads.biases[0], g)
    np.testing.assert_allclose(grads.input, W.T @ g)


def test_zero_upstream_gives_zero_gradients():
    params = encoder.init_encoder(rng_for(5, 4), (4, 5, 2))
    _, tape = encoder.forward(params, np.ones(4))
    grads = encoder.backward(tape, np.zeros(2))
    assert all(np.all(a == 0) for a in grads.arrays()) and np.all(grads.input == 0)


@given(st.integers(0, 10_000), st.sampled_from(["tanh", "relu", "identity"]))
def test_backward_matches_fd(seed, activation):
    rng = np.random.default_rng(seed)
    params = encoder.init_encoder(rng, (3, 4, 2), activation)
    params = params.with_arrays([a + 0.1 * rng.standard_normal(a.shape) for a in params.arrays()])
    x = rng.standard_normal(3)
    up = rng.standard_normal(2)
    _, tape = encoder.forward(params, x)
    grads = encoder.backward(tape, up)

    def readout(arrays):
        return float(encoder.forward(params.with_arrays(arrays), x)[0] @ up)

    arrays = params.arrays()
    for i, g in enumerate(grads.arrays()):
        def fi(a, i=i):
            trial = list(arrays)
            trial[i] = a
            return readout(trial)
        fd = oracle.fd_gradient(fi, arrays[i])
        scale = max(np.max(np.abs(fd)), 1e-3)
        assert np.max(np.abs(g - fd)) / scale <= 1e-5


def test_shape_errors():
    params = encoder.init_encoder(rng_for(6, 4), (4, 3))
    with pytest.raises(ValueError):
        encoder.forward(params, np.ones(5))
    _, tape = encoder.forward(params, np.ones(4))
    with pytest.raises(ValueError):
        encoder.backward(tape, np.ones(4))


def test_glorot_init_bounds():
    params = encoder.init_encoder(rng_for(7, 4), (16, 32, 8))
    assert params.dims == [16, 32, 8]
    assert np.max(np.abs(params.weights[0])) <= np.sqrt(6 / 48)
    assert all(np.all(b == 0) for b in params.biases)


def test_sgd_and_zero_lr():
    p = [np.array([2.0])]
    np.testing.assert_array_equal(encoder.apply_update(p, [np.array([3.0])], SGD(0.0))[0], [2.0])
    np.testing.assert_allclose(encoder.apply_update(p, [np.array([3.0])], SGD(0.1))[0], [1.7])
    np.testing.assert_array_equal(encoder.apply_update(p, [np.array([3.0])], Adam(lr=0.0))[0], [2.0])


def test_adam_first_step_by_hand():
    rule = Adam(lr=0.1)
    g = 3.0
    m = 0.1 * g
    v = 0.001 * g * g
    expected = 2.0 - 0.1 * (m / 0.1) / (np.sqrt(v / 0.001) + 1e-8)
    out = encoder.apply_update([np.array([2.0])], [np.array([g])], rule)
    assert out[0][0] == pytest.approx(expected, rel=1e-15)
    assert rule.t == 1


def test_update_rejects_mismatch():
    with pytest.raises(ValueError):
        encoder.apply_update([np.ones(2)], [np.ones(3)], SGD(0.1))


def test_checkpoint_roundtrip(tmp_path):
    params = encoder.init_encoder(rng_for(8, 4), (4, 5, 2), "relu")
    encoder.save_checkpoint(params, tmp_path / "e.ckpt")
    loaded = encoder.load_checkpoint(tmp_path / "e.ckpt")
    assert loaded.activation == "relu"
    for a, b in zip(params.arrays(), loaded.arrays()):
        np.testing.assert_array_equal(a, b)


def test_deterministic_training_prefix():
    def run():
        params = encoder.init_encoder(rng_for(9, 4), (3, 4, 2))
        rule = Adam(lr=0.01)
        for i in range(5):
            _, tape = encoder.forward(params, rng_for(9, 4, i).standard_normal((6, 3)))
            params = encoder.update_encoder(params, encoder.backward(tape, np.ones((6, 2))), rule)
        return params.arrays()
    for a, b in zip(run(), run()):
        np.testing.assert_array_equal(a, b)
