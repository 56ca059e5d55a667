"""Spectral penalties on a matrix of linear predictors, with exact gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg

SIGMA_FLOOR = 1e-8


@dataclass(frozen=True)
class PenaltyConfig:
    lambda_kappa: float = 1.0
    lambda_frob: float = 1.0
    lambda_entropy: float = 0.0
    sigma_floor: float = SIGMA_FLOOR

    def __post_init__(self):
        for name in ("lambda_kappa", "lambda_frob", "lambda_entropy", "sigma_floor"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and non-negative, got {v}")


@dataclass(frozen=True)
class PenaltyValue:
    value: float
    gradient: np.ndarray
    degenerate: bool = False


def spectral_penalty(W, cfg: PenaltyConfig) -> PenaltyValue:
    """lambda_kappa * sigma_1 / sigma_k + lambda_frob * ||W||_F^2.

    When sigma_k falls below the floor the kappa term is evaluated at the
    floor and contributes no gradient.
    """
    W = linalg.as_matrix(W)
    value = 0.0
    grad = np.zeros_like(W)
    degenerate = False
    if cfg.lambda_kappa:
        res = linalg.svd(W)
        s1, sk = res.sigma[0], res.sigma[-1]
        if sk < cfg.sigma_floor:
            degenerate = True
            value += cfg.lambda_kappa * s1 / cfg.sigma_floor
        else:
            value += cfg.lambda_kappa * s1 / sk
            g1 = np.outer(res.u[:, 0], res.v[:, 0])
            gk = np.outer(res.u[:, -1], res.v[:, -1])
            grad += cfg.lambda_kappa * (g1 / sk - (s1 / sk ** 2) * gk)
    if cfg.lambda_frob:
        value += cfg.lambda_frob * float(np.sum(W * W))
        grad += 2.0 * cfg.lambda_frob * W
    return PenaltyValue(float(value), grad, degenerate)


def entropy_penalty(W, lambda_entropy: float) -> PenaltyValue:
    """lambda * sum_i p_i log p_i with p = softmax(sigma(W)).

    d/dsigma_i = p_i (log p_i - H), mapped back through u_i v_i^T.
    """
    W = linalg.as_matrix(W)
    if not lambda_entropy:
        return PenaltyValue(0.0, np.zeros_like(W))
    res = linalg.svd(W)
    z = np.exp(res.sigma - res.sigma.max())
    p = z / z.sum()
    logp = np.log(p)
    H = float(np.sum(p * logp))
    dsig = p * (logp - H)
    grad = (res.u * dsig) @ res.v.T
    return PenaltyValue(lambda_entropy * H, lambda_entropy * grad)


def kappa_penalty(W, lambda_kappa: float, sigma_floor: float = SIGMA_FLOOR) -> PenaltyValue:
    return spectral_penalty(W, PenaltyConfig(lambda_kappa, 0.0, 0.0, sigma_floor))
