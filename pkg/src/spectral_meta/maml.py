"""Gradient-based meta-learning: inner adaptation, outer meta-update with
optional spectral penalties on the adapted heads, and the scalar
linear-regression recurrence with its condition-number trace."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import linalg, regularizers
from .encoder import Adam, EncoderParams, SGD, apply_update, embed, init_encoder
from .tasks import Episode

ORDERS = ("first", "second")


# models -------------------------------------------------------------------------

class Classifier:
    """Encoder followed by a linear head; parameters are encoder arrays then (W, b)."""

    head_index = -2

    def __init__(self, activation: str = "tanh"):
        self.activation = activation

    def logits(self, ps, x) -> ad.Tensor:
        h = embed(ps[:-2], x, self.activation)
        W, b = ps[-2], ps[-1]
        return ad.matmul(h, ad.swap_last(W)) + ad.reshape(b, b.shape[:-1] + (1, b.shape[-1]))

    def batch_loss(self, ps, x, y):
        """Sum over the leading episode axis of per-episode mean cross-entropy."""
        logits = self.logits(ps, x)
        return ad.cross_entropy(logits, y) * float(x.shape[0]), logits

    @staticmethod
    def accuracy(out, y) -> float:
        return float(np.mean(np.argmax(out.value, axis=-1) == y))


class LinearRegression:
    """Single weight row w (shape (1, d)); loss 1/2 mean (x.w - y)^2 per episode."""

    head_index = 0

    def batch_loss(self, ps, x, y):
        w = ps[0]
        pred = ad.reshape(ad.matmul(ad.const(x), ad.swap_last(w)), y.shape)
        n = y.shape[-1]
        return ad.tsum(ad.square(pred - y)) * (0.5 / n), pred

    @staticmethod
    def accuracy(out, y) -> float:
        return float("nan")


@dataclass
class ModelParams:
    encoder: EncoderParams
    head_w: np.ndarray
    head_b: np.ndarray

    def __post_init__(self):
        if self.head_w.ndim != 2 or self.head_w.shape[1] != self.encoder.output_dim:
            raise ValueError(f"head {self.head_w.shape} does not fit encoder output "
                             f"{self.encoder.output_dim}")
        if self.head_b.shape != (self.head_w.shape[0],):
            raise ValueError("head bias must have one entry per head row")
        if not (np.all(np.isfinite(self.head_w)) and np.all(np.isfinite(self.head_b))):
            raise ValueError("non-finite head parameters")

    def arrays(self) -> list:
        return self.encoder.arrays() + [self.head_w, self.head_b]

    def with_arrays(self, arrays) -> "ModelParams":
        arrays = list(arrays)
        return ModelParams(self.encoder.with_arrays(arrays[:-2]), np.array(arrays[-2]),
                           np.array(arrays[-1]))

    def model(self) -> Classifier:
        return Classifier(self.encoder.activation)


def init_model(rng: np.random.Generator, dims=(16, 32, 8), n_way: int = 5,
               activation: str = "tanh") -> ModelParams:
    enc = init_encoder(rng, dims, activation)
    limit = np.sqrt(6.0 / (dims[-1] + n_way))
    return ModelParams(enc, rng.uniform(-limit, limit, size=(n_way, dims[-1])), np.zeros(n_way))


# batches ------------------------------------------------------------------------

@dataclass(frozen=True)
class TaskBatch:
    support_x: np.ndarray   # (B, n_s, d)
    support_y: np.ndarray   # (B, n_s)
    query_x: np.ndarray
    query_y: np.ndarray

    @property
    def size(self) -> int:
        return self.support_x.shape[0]

    @staticmethod
    def from_episodes(episodes) -> "TaskBatch":
        episodes = list(episodes)
        if not episodes:
            raise ValueError("empty episode batch")
        return TaskBatch(np.stack([e.support_x for e in episodes]),
                         np.stack([e.support_y for e in episodes]),
                         np.stack([e.query_x for e in episodes]),
                         np.stack([e.query_y for e in episodes]))

    @staticmethod
    def from_arrays(support, query) -> "TaskBatch":
        """``support``/``query``: lists of (X, y) pairs, one per task."""
        if not support:
            raise ValueError("empty task batch")
        return TaskBatch(np.stack([s[0] for s in support]), np.stack([s[1] for s in support]),
                         np.stack([q[0] for q in query]), np.stack([q[1] for q in query]))


def _batched(leaves, B: int):
    return [ad.broadcast_to(ad.reshape(p, (1,) + p.shape), (B,) + p.shape) for p in leaves]


def _adapt(model, ps, x, y, steps: int, alpha: float, create_graph: bool):
    if steps == 0 or alpha == 0.0:
        return ps
    for _ in range(steps):
        loss, _ = model.batch_loss(ps, x, y)
        gs = ad.grad(loss, ps, create_graph=create_graph)
        if create_graph:
            ps = [p - alpha * g for p, g in zip(ps, gs)]
        else:
            ps = [ad.leaf(p.value - alpha * g.value) for p, g in zip(ps, gs)]
    return ps


def adapt_arrays(model, arrays, x, y, steps: int, alpha: float) -> list:
    """Inner adaptation of one task (x: (n, d)); returns new arrays."""
    if steps < 0 or alpha < 0:
        raise ValueError("inner steps and alpha must be non-negative")
    leaves = [ad.leaf(a) for a in arrays]
    ps = _batched(leaves, 1)
    out = _adapt(model, ps, np.asarray(x)[None], np.asarray(y)[None], steps, alpha, False)
    if out is ps:
        return [np.array(a) for a in arrays]
    return [p.value[0].copy() for p in out]


def inner_adapt(params: ModelParams, support: Episode, steps: int, alpha: float) -> ModelParams:
    return params.with_arrays(adapt_arrays(params.model(), params.arrays(), support.support_x,
                                           support.support_y, steps, alpha))


# outer step ---------------------------------------------------------------------

@dataclass(frozen=True)
class MetaConfig:
    alpha: float = 0.01
    beta: float = 0.001
    inner_steps: int = 5
    order: str = "second"
    lambda_kappa: float = 0.0
    lambda_frob: float = 0.0

    def __post_init__(self):
        if self.order not in ORDERS:
            raise ValueError(f"order must be one of {ORDERS}")
        if self.inner_steps < 0 or self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha, beta and inner_steps must be non-negative")
        regularizers.PenaltyConfig(self.lambda_kappa, self.lambda_frob)


@dataclass
class StepMetrics:
    loss: float
    objective: float
    kappa_wn: float
    frob_wn: float
    accuracy: float
    degenerate: bool
    w_n: np.ndarray = field(repr=False, default=None)


def _head_stack(adapted, model) -> ad.Tensor:
    H = adapted[model.head_index]
    return ad.reshape(H, (H.shape[0] * H.shape[1], H.shape[2]))


def meta_gradient(model, arrays, batch: TaskBatch, cfg: MetaConfig):
    """Gradient of the mean query loss after adaptation (plus penalties on the
    stacked adapted head rows) with respect to the meta-parameters."""
    leaves = [ad.leaf(a) for a in arrays]
    B = batch.size
    second = cfg.order == "second"
    ps = _batched(leaves, B)
    adapted = _adapt(model, ps, batch.support_x, batch.support_y, cfg.inner_steps, cfg.alpha, second)
    if not second:
        adapted = [ad.leaf(p.value) for p in adapted]
    qloss, out = model.batch_loss(adapted, batch.query_x, batch.query_y)
    loss = qloss * (1.0 / B)
    total = loss
    W_N = _head_stack(adapted, model)
    degenerate = False
    if cfg.lambda_kappa or cfg.lambda_frob:
        pen = regularizers.spectral_penalty(
            W_N.value, regularizers.PenaltyConfig(cfg.lambda_kappa, cfg.lambda_frob))
        degenerate = pen.degenerate
        total = total + ad.spectral(W_N, lambda M: (pen.value, pen.gradient))
    if second:
        grads = [g.value for g in ad.grad(total, leaves)]
    else:
        grads = [g.value.sum(axis=0) for g in ad.grad(total, adapted)]
    kappa, flag = linalg.condition_number(W_N.value, with_flag=True)
    metrics = StepMetrics(float(loss.value), float(total.value), kappa,
                          linalg.frobenius_norm(W_N.value), model.accuracy(out, batch.query_y),
                          degenerate or flag, W_N.value.copy())
    return grads, metrics


def meta_objective(model, arrays, batch: TaskBatch, cfg: MetaConfig) -> float:
    """Value of the full objective (differentiated exactly by second order)."""
    ps = [ad.leaf(np.broadcast_to(a, (batch.size,) + np.shape(a))) for a in arrays]
    adapted = _adapt(model, ps, batch.support_x, batch.support_y, cfg.inner_steps, cfg.alpha, False)
    qloss, _ = model.batch_loss(adapted, batch.query_x, batch.query_y)
    value = float(qloss.value) / batch.size
    if cfg.lambda_kappa or cfg.lambda_frob:
        W_N = adapted[model.head_index].value
        W_N = W_N.reshape(-1, W_N.shape[-1])
        value += regularizers.spectral_penalty(
            W_N, regularizers.PenaltyConfig(cfg.lambda_kappa, cfg.lambda_frob)).value
    return value


def meta_step(model, arrays, batch: TaskBatch, cfg: MetaConfig, rule=None):
    """One outer update; ``rule`` defaults to plain gradient descent with rate beta."""
    grads, metrics = meta_gradient(model, arrays, batch, cfg)
    rule = SGD(cfg.beta) if rule is None else rule
    return apply_update(arrays, grads, rule), metrics


def outer_step(params: ModelParams, episodes, cfg: MetaConfig, rule=None):
    new, metrics = meta_step(params.model(), params.arrays(), TaskBatch.from_episodes(episodes),
                             cfg, rule)
    return params.with_arrays(new), metrics


def make_adam(cfg: MetaConfig) -> Adam:
    return Adam(lr=cfg.beta)


def evaluate_episode(params: ModelParams, episode: Episode, steps: int, alpha: float) -> float:
    """Query accuracy after ``steps`` inner updates on the support set."""
    model = params.model()
    adapted = adapt_arrays(model, params.arrays(), episode.support_x, episode.support_y, steps, alpha)
    with ad.no_grad():
        logits = model.logits([ad.const(a) for a in adapted], episode.query_x)
    return float(np.mean(np.argmax(logits.value, axis=-1) == episode.query_y))


def adapted_head(params: ModelParams, episode: Episode, steps: int, alpha: float) -> np.ndarray:
    adapted = adapt_arrays(params.model(), params.arrays(), episode.support_x, episode.support_y,
                           steps, alpha)
    return adapted[-2]


# linear-regression recurrence ----------------------------------------------------

def recurrence_rate(alpha: float, beta: float) -> float:
    return beta * (1.0 - alpha) ** 2


def linear_recurrence(thetas, alpha: float, beta: float, w0=None) -> np.ndarray:
    """w_t = w_{t-1} - c (w_{t-1} - theta_t), c = beta (1 - alpha)^2.

    Returns the (T + 1, d) array w_0 .. w_T.
    """
    thetas = np.atleast_2d(np.asarray(thetas, dtype=np.float64))
    c = recurrence_rate(alpha, beta)
    w = np.zeros(thetas.shape[1]) if w0 is None else np.array(w0, dtype=np.float64)
    out = [w.copy()]
    for th in thetas:
        w = w - c * (w - th)
        out.append(w.copy())
    return np.array(out)


@dataclass(frozen=True)
class Prop1Entry:
    step: int
    theta_pair: np.ndarray     # (2, d): the two tasks that move W^i to W^{i+1}
    w_pair: np.ndarray         # (2, d): rows w_i, w_{i+1}
    kappa: float
    pair_rank_deficient: bool


@dataclass
class Prop1Trace:
    alpha: float
    beta: float
    entries: list

    @property
    def kappas(self) -> np.ndarray:
        return np.array([e.kappa for e in self.entries])

    def violations(self, slack: float = 1e-12) -> list:
        """Steps i with a rank-deficient task pair where kappa(W^{i+1}) < kappa(W^i) - slack."""
        bad = []
        for a, b in zip(self.entries[:-1], self.entries[1:]):
            if a.pair_rank_deficient and not b.kappa >= a.kappa - slack:
                bad.append(a.step)
        return bad


def _reduced_basis(vectors, rtol: float):
    """Orthonormal basis of span(vectors), scanning in the given order, plus each
    vector's coordinates. A vector's coordinates stop at the first prefix of the
    basis that reproduces it to ``rtol``, so parallel vectors get exactly one
    nonzero coordinate."""
    basis, coords = [], []
    for v in vectors:
        nv = np.linalg.norm(v)
        a = []
        r = v.copy()
        done = nv == 0.0
        for q in basis:
            if done:
                break
            a.append(float(q @ r))
            r = r - a[-1] * q
            done = np.linalg.norm(r) <= rtol * nv
        if not done:
            nr = np.linalg.norm(r)
            basis.append(r / nr)
            a.append(float(nr))
        coords.append(a)
    r = len(basis)
    C = np.zeros((len(vectors), r))
    for i, a in enumerate(coords):
        C[i, :len(a)] = a
    return np.array(basis).reshape(r, -1), C


def _wedge_sq(a: np.ndarray, b: np.ndarray) -> float:
    """||a ^ b||^2 = sum_{j<l} (a_j b_l - a_l b_j)^2."""
    total = 0.0
    for j in range(a.shape[0]):
        for l in range(j + 1, a.shape[0]):
            total += (a[j] * b[l] - a[l] * b[j]) ** 2
    return total


def _two_row_kappa(a: np.ndarray, b: np.ndarray, det_sq: float) -> float:
    """sigma_1 / sigma_2 of the 2-row matrix [a; b] given its Gram determinant."""
    t = float(a @ a + b @ b)
    if det_sq <= 0.0:
        return np.inf
    s = np.sqrt(max(t * t - 4.0 * det_sq, 0.0))
    return float((t + s) / (2.0 * np.sqrt(det_sq)))


def simulate_prop1(thetas, alpha: float, beta: float, w0=None, rtol: float = 1e-10) -> Prop1Trace:
    """Run the recurrence and record kappa of every pair of consecutive predictors.

    The recurrence runs in coordinates of an orthonormal basis of the span of
    the tasks, so parallel tasks share one coordinate exactly. The Gram
    determinant of [w_i; w_{i+1}] equals c^2 ||w_i ^ theta_{i+1}||^2, which
    keeps the small singular value accurate when kappa is far beyond 1/eps.
    """
    thetas = [np.asarray(t, dtype=np.float64) for t in thetas]
    if len(thetas) < 2 or thetas[0].shape[0] < 2:
        raise ValueError("need at least two tasks of dimension >= 2")
    d = thetas[0].shape[0]
    c = recurrence_rate(alpha, beta)
    w0 = np.zeros(d) if w0 is None else np.asarray(w0, dtype=np.float64)
    vecs = thetas[::-1] + [w0]
    Q, C = _reduced_basis(vecs, rtol)
    tc = C[:len(thetas)][::-1]
    w = C[-1].copy()
    ws = [w.copy()]
    for t in tc:
        w = (1.0 - c) * w + c * t
        ws.append(w.copy())
    entries = []
    for i in range(len(thetas) - 1):
        a, b = ws[i], ws[i + 1]
        kappa = _two_row_kappa(a, b, c * c * _wedge_sq(a, tc[i]))
        pair = np.vstack([thetas[i], thetas[i + 1]])
        entries.append(Prop1Entry(i, pair, np.vstack([a, b]) @ Q, kappa,
                                  _wedge_sq(tc[i], tc[i + 1]) == 0.0))
    return Prop1Trace(alpha, beta, entries)
