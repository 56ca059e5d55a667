"""Finite-difference suites for every hand-written or taped gradient."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import encoder, maml, oracle, protonet, regularizers
from .tasks import Episode, rng_for

TOLERANCE = 1e-4


@dataclass(frozen=True)
class CheckResult:
    suite: str
    max_rel_err: float
    tol: float

    @property
    def passed(self) -> bool:
        return bool(self.max_rel_err <= self.tol)


def rel_err(analytic, numeric) -> float:
    a = np.concatenate([np.ravel(x) for x in analytic])
    n = np.concatenate([np.ravel(x) for x in numeric])
    return float(np.max(np.abs(a - n)) / max(np.max(np.abs(n)), 1e-12))


def _fd_arrays(f, arrays, h):
    """Finite differences of f(list of arrays) with respect to each array."""
    out = []
    for i, a in enumerate(arrays):
        def fi(x, i=i):
            trial = [x if j == i else arrays[j] for j in range(len(arrays))]
            return f(trial)
        out.append(oracle.fd_gradient(fi, a, oracle.FdConfig(h)))
    return out


def toy_episode(seed: int = 0, n_way: int = 2, k_shot: int = 2, n_query: int = 2, dim: int = 4) -> Episode:
    rng = rng_for(seed, 4, 1)
    means = 2.0 * rng.standard_normal((n_way, dim))
    sx = np.vstack([means[c] + rng.standard_normal((k_shot, dim)) for c in range(n_way)])
    qx = np.vstack([means[c] + rng.standard_normal((n_query, dim)) for c in range(n_way)])
    return Episode(sx, np.repeat(np.arange(n_way), k_shot), qx, np.repeat(np.arange(n_way), n_query),
                   n_way, k_shot, n_query)


def check_encoder(seed: int = 0, activation: str = "tanh", h: float = 1e-5) -> CheckResult:
    rng = rng_for(seed, 4, 2)
    params = encoder.init_encoder(rng, (4, 6, 3), activation)
    params = params.with_arrays([a + 0.1 * rng.standard_normal(a.shape) for a in params.arrays()])
    x = rng.standard_normal((3, 4))
    up = rng.standard_normal((3, 3))
    _, tape = encoder.forward(params, x)
    g = encoder.backward(tape, up)

    def readout(arrays):
        emb, _ = encoder.forward(params.with_arrays(arrays), x)
        return float(np.sum(emb * up))
    fd = _fd_arrays(readout, params.arrays(), h)
    gx = oracle.fd_gradient(lambda xx: float(np.sum(encoder.forward(params, xx)[0] * up)), x,
                            oracle.FdConfig(h))
    return CheckResult(f"encoder_backward_{activation}",
                       rel_err(g.arrays() + [g.input], fd + [gx]), TOLERANCE)


def check_protonet(normalize: bool, seed: int = 0, lambda_entropy: float = 0.1, h: float = 1e-5) -> CheckResult:
    ep = toy_episode(seed)
    enc = encoder.init_encoder(rng_for(seed, 4, 3), (4, 5, 3), "tanh")
    res = protonet.proto_loss(ep, enc, normalize, lambda_entropy)
    fd = _fd_arrays(lambda arrs: protonet.proto_loss(ep, enc.with_arrays(arrs), normalize, lambda_entropy).loss,
                    enc.arrays(), h)
    mode = "normalized" if normalize else "unnormalized"
    return CheckResult(f"proto_loss_{mode}", rel_err(res.gradients, fd), TOLERANCE)


class TanhRegression:
    """1/2 mean (tanh(x.w) - y)^2: a two-parameter model with a non-constant Hessian."""

    head_index = 0

    def batch_loss(self, ps, x, y):
        w = ps[0]
        pred = ad.reshape(ad.tanh(ad.matmul(ad.const(x), ad.swap_last(w))), y.shape)
        return ad.tsum(ad.square(pred - y)) * (0.5 / y.shape[-1]), pred

    @staticmethod
    def accuracy(out, y) -> float:
        return float("nan")


def toy_maml_problem(seed: int = 0):
    rng = rng_for(seed, 4, 4)
    X = rng.standard_normal((2, 6, 2))
    Y = rng.standard_normal((2, 6))
    batch = maml.TaskBatch(X, Y, rng.standard_normal((2, 6, 2)), rng.standard_normal((2, 6)))
    return TanhRegression(), [np.array([[0.4, -0.8]])], batch


def check_maml_second_order(seed: int = 0, h: float = 1e-5) -> CheckResult:
    model, arrays, batch = toy_maml_problem(seed)
    cfg = maml.MetaConfig(alpha=0.3, inner_steps=3, order="second")
    g, _ = maml.meta_gradient(model, arrays, batch, cfg)
    fd = _fd_arrays(lambda arrs: maml.meta_objective(model, arrs, batch, cfg), arrays, h)
    return CheckResult("maml_second_order", rel_err(g, fd), TOLERANCE)


def check_spectral_penalty(seed: int = 0, h: float = 1e-6) -> CheckResult:
    W = rng_for(seed, 4, 5).standard_normal((4, 3))
    cfg = regularizers.PenaltyConfig(1.0, 1.0)
    g = regularizers.spectral_penalty(W, cfg).gradient
    fd = oracle.fd_gradient(lambda M: regularizers.spectral_penalty(M, cfg).value, W, oracle.FdConfig(h))
    return CheckResult("spectral_penalty", rel_err([g], [fd]), TOLERANCE)


def check_entropy_penalty(seed: int = 0, h: float = 1e-6) -> CheckResult:
    W = rng_for(seed, 4, 6).standard_normal((3, 3))
    g = regularizers.entropy_penalty(W, 1.0).gradient
    fd = oracle.fd_gradient(lambda M: regularizers.entropy_penalty(M, 1.0).value, W, oracle.FdConfig(h))
    return CheckResult("entropy_penalty", rel_err([g], [fd]), TOLERANCE)


def run_all(seed: int = 0) -> list:
    return [
        check_protonet(False, seed),
        check_protonet(True, seed),
        check_maml_second_order(seed),
        check_spectral_penalty(seed),
        check_entropy_penalty(seed),
        *(check_encoder(seed, act) for act in ("tanh", "relu", "identity")),
    ]
