"""Prototypical-network loss with optional prototype normalization and a
singular-value entropy penalty on the prototype matrix."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import regularizers
from .encoder import EncoderParams, embed
from .tasks import Episode

NORM_FLOOR = 1e-12


class DegeneratePrototypeError(ValueError):
    pass


@dataclass(frozen=True)
class PrototypeSet:
    prototypes: np.ndarray
    normalized: bool = False


def _averaging_matrix(labels: np.ndarray, n_way: int) -> np.ndarray:
    A = np.zeros((n_way, labels.shape[0]))
    A[labels, np.arange(labels.shape[0])] = 1.0
    return A / A.sum(axis=1, keepdims=True)


def prototypes_from_embeddings(emb_support: np.ndarray, labels: np.ndarray, n_way: int) -> np.ndarray:
    return _averaging_matrix(np.asarray(labels), n_way) @ emb_support


def compute_prototypes(episode: Episode, encoder: EncoderParams) -> PrototypeSet:
    emb = embed([ad.const(a) for a in encoder.arrays()], episode.support_x, encoder.activation).value
    return PrototypeSet(prototypes_from_embeddings(emb, episode.support_y, episode.n_way))


def normalize_rows(P: PrototypeSet) -> PrototypeSet:
    norms = np.linalg.norm(P.prototypes, axis=1, keepdims=True)
    if np.any(norms < NORM_FLOOR):
        bad = np.flatnonzero(norms[:, 0] < NORM_FLOOR).tolist()
        raise DegeneratePrototypeError(f"prototype rows {bad} have (near) zero norm")
    return PrototypeSet(P.prototypes / norms, normalized=True)


def _normalize_tensor(C: ad.Tensor) -> ad.Tensor:
    norms = np.linalg.norm(C.value, axis=-1)
    if np.any(norms < NORM_FLOOR):
        raise DegeneratePrototypeError("prototype with (near) zero norm")
    return C / ad.sqrt(ad.tsum(ad.square(C), axis=-1, keepdims=True))


def squared_distances(emb_query, C) -> ad.Tensor:
    """(n_query, n_way) squared Euclidean distances."""
    q = ad.const(emb_query)
    C = ad.const(C)
    diff = ad.reshape(q, q.shape[:-1] + (1, q.shape[-1])) - ad.reshape(C, C.shape[:-2] + (1,) + C.shape[-2:])
    return ad.tsum(ad.square(diff), axis=-1)


def class_probabilities(emb_query: np.ndarray, C: np.ndarray) -> np.ndarray:
    d = squared_distances(emb_query, C).value
    z = -d - (-d).max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def class_probabilities_expanded(emb_query: np.ndarray, C: np.ndarray) -> np.ndarray:
    """Softmax of the linear logits 2 c^T q - ||c||^2 (query norm dropped)."""
    logits = 2.0 * emb_query @ C.T - np.sum(C * C, axis=1)[None, :]
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class ProtoLoss:
    loss: float
    gradients: list
    prototypes: PrototypeSet
    probabilities: np.ndarray
    accuracy: float
    entropy: float = 0.0
    degenerate: bool = False


def proto_objective(emb_support, emb_query, episode: Episode, normalize: bool = False,
                    lambda_entropy: float = 0.0, lambda_kappa: float = 0.0):
    """Loss tensor from embeddings. Returns (total, data_loss, prototype tensor, info)."""
    emb_support = ad.const(emb_support)
    A = _averaging_matrix(episode.support_y, episode.n_way)
    C = ad.matmul(ad.Tensor(A), emb_support)
    if normalize:
        C = _normalize_tensor(C)
    logits = ad.neg(squared_distances(emb_query, C))
    data = ad.cross_entropy(logits, episode.query_y)
    total = data
    info = {"entropy": 0.0, "degenerate": False}
    if lambda_entropy:
        pen = ad.spectral(C, lambda M: _value_grad(regularizers.entropy_penalty(M, lambda_entropy)))
        info["entropy"] = float(pen.value) / lambda_entropy
        total = total + pen
    if lambda_kappa:
        res = regularizers.kappa_penalty(C.value, lambda_kappa)
        info["degenerate"] = res.degenerate
        total = total + ad.spectral(C, lambda M: _value_grad(res))
    return total, data, C, info


def _value_grad(p):
    return p.value, p.gradient


def proto_loss(episode: Episode, encoder: EncoderParams, normalize: bool = False,
               lambda_entropy: float = 0.0, lambda_kappa: float = 0.0) -> ProtoLoss:
    """Mean over queries of -log softmax(-||phi(q) - c||^2)[true class], plus the
    optional spectral terms on the prototype matrix. Gradients follow
    ``encoder.arrays()`` order."""
    tensors = [ad.leaf(a) for a in encoder.arrays()]
    emb_s = embed(tensors, episode.support_x, encoder.activation)
    emb_q = embed(tensors, episode.query_x, encoder.activation)
    total, _, C, info = proto_objective(emb_s, emb_q, episode, normalize, lambda_entropy, lambda_kappa)
    grads = [g.value for g in ad.grad(total, tensors)]
    probs = class_probabilities(emb_q.value, C.value)
    acc = float(np.mean(np.argmax(probs, axis=1) == episode.query_y)) if probs.size else float("nan")
    return ProtoLoss(float(total.value), grads, PrototypeSet(C.value.copy(), normalize), probs, acc,
                     info["entropy"], info["degenerate"])


def predictors(episode: Episode, encoder: EncoderParams, normalize: bool) -> np.ndarray:
    """The rows this method uses as linear predictors for one episode."""
    P = compute_prototypes(episode, encoder)
    return normalize_rows(P).prototypes if normalize else P.prototypes


def nearest_prototype_accuracy(episode: Episode, encoder: EncoderParams, normalize: bool) -> float:
    tens = [ad.const(a) for a in encoder.arrays()]
    emb_q = embed(tens, episode.query_x, encoder.activation).value
    C = predictors(episode, encoder, normalize)
    probs = class_probabilities(emb_q, C)
    return float(np.mean(np.argmax(probs, axis=1) == episode.query_y))
