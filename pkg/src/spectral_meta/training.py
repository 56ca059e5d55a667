"""Training and evaluation loops for both methods on the Gaussian family."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import partial

import numpy as np

from . import diagnostics, maml, protonet
from .config import RunConfig
from .encoder import Adam, EncoderParams, apply_update, init_encoder
from .tasks import (STREAM_INIT, STREAM_TEST, STREAM_TRAIN, Episode, GaussianFamily, rng_for,
                    sample_episode)

# normalized rows are unit length only up to the rounding of x / ||x||
FROB_ULPS = 4


def frob_is_exact(frob, n_rows: int) -> bool:
    target = np.sqrt(n_rows)
    return bool(np.all(np.abs(np.asarray(frob) - target) <= FROB_ULPS * np.spacing(target)))


def family_for(cfg: RunConfig, seed: int) -> GaussianFamily:
    return GaussianFamily(dim=cfg.dim, radius=cfg.radius, noise_std=cfg.noise_std,
                          n_classes=cfg.n_classes, seed=seed, n_test_classes=cfg.n_test_classes)


def _sample(family: GaussianFamily, cfg: RunConfig, split: str, keys) -> Episode:
    seed, stream, index = keys
    return sample_episode(family, cfg.n_way, cfg.k_shot, cfg.n_query, rng_for(seed, stream, index), split)


def train_sampler(cfg: RunConfig, seed: int):
    """Episode i of run ``seed`` is drawn from split_seed(seed, TRAIN, i)."""
    return partial(_sample, family_for(cfg, seed), cfg, "train")


def test_episode(cfg: RunConfig, seed: int, i: int) -> Episode:
    return _sample(family_for(cfg, seed), cfg, "test", (seed, STREAM_TEST, i))


@dataclass
class RunResult:
    config: RunConfig
    seed: int
    trace: diagnostics.Trace
    archive: diagnostics.EpisodeArchive
    params: object
    extra: dict = field(default_factory=dict)

    def predictors(self, episode: Episode) -> np.ndarray:
        cfg = self.config
        if cfg.method == "protonet":
            return protonet.predictors(episode, self.params, cfg.normalize)
        return maml.adapted_head(self.params, episode, cfg.inner_steps_train, cfg.alpha)

    def global_kappa(self, m: int | None = None) -> float:
        return diagnostics.global_kappa(self.predictors, self.archive,
                                        self.config.global_m if m is None else m)

    def evaluate(self, n: int | None = None) -> float:
        return evaluate(self.config, self.params, self.seed, n)


def train_protonet(cfg: RunConfig, seed: int, initial: EncoderParams | None = None) -> RunResult:
    """One Adam step per episode; the trace tracks that episode's prototypes."""
    enc = initial or init_encoder(rng_for(seed, STREAM_INIT), cfg.dims, cfg.activation)
    sampler = train_sampler(cfg, seed)
    archive = diagnostics.EpisodeArchive(sampler)
    trace = diagnostics.Trace()
    rule = Adam(lr=cfg.beta)
    for i in range(cfg.episodes):
        keys = (seed, STREAM_TRAIN, i)
        ep = sampler(keys)
        archive.append(keys, ep)
        res = protonet.proto_loss(ep, enc, cfg.normalize, cfg.lambda_entropy, cfg.proto_kappa)
        trace.track(i, res.prototypes.prototypes, res.accuracy, res.loss)
        enc = enc.with_arrays(apply_update(enc.arrays(), res.gradients, rule))
    return RunResult(cfg, seed, trace, archive, enc)


def meta_config(cfg: RunConfig) -> maml.MetaConfig:
    return maml.MetaConfig(alpha=cfg.alpha, beta=cfg.beta, inner_steps=cfg.inner_steps_train,
                           order=cfg.order, lambda_kappa=cfg.lambda_kappa, lambda_frob=cfg.lambda_frob)


def train_maml(cfg: RunConfig, seed: int, initial: maml.ModelParams | None = None) -> RunResult:
    """``episodes // batch`` outer steps; the trace tracks the stacked adapted heads."""
    params = initial or maml.init_model(rng_for(seed, STREAM_INIT), cfg.dims, cfg.n_way, cfg.activation)
    sampler = train_sampler(cfg, seed)
    archive = diagnostics.EpisodeArchive(sampler)
    trace = diagnostics.Trace()
    mcfg = meta_config(cfg)
    rule = Adam(lr=cfg.beta)
    for step in range(cfg.episodes // cfg.batch):
        batch = []
        for j in range(cfg.batch):
            keys = (seed, STREAM_TRAIN, step * cfg.batch + j)
            ep = sampler(keys)
            archive.append(keys, ep)
            batch.append(ep)
        params, m = maml.outer_step(params, batch, mcfg, rule)
        trace.track(step, m.w_n, m.accuracy, m.loss)
    return RunResult(cfg, seed, trace, archive, params)


def train(cfg: RunConfig, seed: int) -> RunResult:
    return (train_protonet if cfg.method == "protonet" else train_maml)(cfg, seed)


def evaluate(cfg: RunConfig, params, seed: int, n: int | None = None) -> float:
    """Mean query accuracy over held-out-class episodes."""
    n = cfg.eval_episodes if n is None else n
    accs = []
    for i in range(n):
        ep = test_episode(cfg, seed, i)
        if cfg.method == "protonet":
            accs.append(protonet.nearest_prototype_accuracy(ep, params, cfg.normalize))
        else:
            accs.append(maml.evaluate_episode(params, ep, cfg.inner_steps_eval, cfg.alpha))
    return float(np.mean(accs))


def mean_ci(values) -> tuple:
    """Mean and half-width of a normal-approximation 95% interval."""
    v = np.asarray(values, dtype=np.float64)
    if v.size < 2:
        return float(v.mean()), float("nan")
    return float(v.mean()), float(1.96 * v.std(ddof=1) / np.sqrt(v.size))
