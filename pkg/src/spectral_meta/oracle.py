"""Brute-force reference computations used to cross-check the main modules.

Nothing here imports linalg, encoder or mtr_linear: every routine is an
independent second route to the same number.
"""

from __future__ import annotations

import decimal
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class FdConfig:
    h: float = 1e-5

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("finite-difference step must be positive")


def fd_gradient(f: Callable[[np.ndarray], float], X, cfg: FdConfig = FdConfig()) -> np.ndarray:
    """Central differences of a scalar function, one entry at a time."""
    X = np.array(X, dtype=np.float64)
    G = np.zeros_like(X)
    h = cfg.h
    for idx in np.ndindex(X.shape):
        orig = X[idx]
        X[idx] = orig + h
        fp = float(f(X.copy()))
        X[idx] = orig - h
        fm = float(f(X.copy()))
        X[idx] = orig
        if not (math.isfinite(fp) and math.isfinite(fm)):
            raise ValueError(f"non-finite evaluation at index {idx}")
        G[idx] = (fp - fm) / (2 * h)
    return G


def jacobi_eigh(S, tol: float = 1e-15, max_sweeps: int = 100):
    """Two-sided cyclic Jacobi for a symmetric matrix; eigenvalues descending.

    Sweeps run over (q, p) with q descending, the reverse of the ordering
    used by the SVD it is meant to check.
    """
    A = np.array(S, dtype=np.float64)
    n = A.shape[0]
    V = np.eye(n)
    for _ in range(max_sweeps):
        off = False
        for q in range(n - 1, 0, -1):
            for p in range(q - 1, -1, -1):
                apq = A[p, q]
                if apq == 0.0 or abs(apq) <= tol * math.sqrt(abs(A[p, p] * A[q, q])):
                    continue
                off = True
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                for k in range(n):
                    akp, akq = A[k, p], A[k, q]
                    A[k, p] = c * akp - s * akq
                    A[k, q] = s * akp + c * akq
                for k in range(n):
                    apk, aqk = A[p, k], A[q, k]
                    A[p, k] = c * apk - s * aqk
                    A[q, k] = s * apk + c * aqk
                for k in range(n):
                    vkp, vkq = V[k, p], V[k, q]
                    V[k, p] = c * vkp - s * vkq
                    V[k, q] = s * vkp + c * vkq
        if not off:
            break
    w = np.diag(A).copy()
    order = np.argsort(-w, kind="stable")
    return w[order], V[:, order]


def gram_svd(M) -> np.ndarray:
    """Singular values as square roots of the Gram-matrix eigenvalues (smaller side)."""
    M = np.array(M, dtype=np.float64)
    if M.ndim != 2 or not np.all(np.isfinite(M)):
        raise ValueError("expected a finite 2-D matrix")
    m, n = M.shape
    G = M.T @ M if m >= n else M @ M.T
    G = 0.5 * (G + G.T)
    w, _ = jacobi_eigh(G)
    return np.sqrt(np.clip(w, 0.0, None))


def gram_condition_number(M, k_rank: int | None = None) -> float:
    s = gram_svd(M)
    k = s.shape[0] if k_rank is None else k_rank
    return float(s[0] / s[k - 1])


def solve_gauss(A, b) -> np.ndarray:
    """Gaussian elimination with partial pivoting on an explicit copy."""
    A = np.array(A, dtype=np.float64)
    b = np.array(b, dtype=np.float64)
    n = A.shape[0]
    squeeze = b.ndim == 1
    B = b.reshape(n, -1).copy()
    for col in range(n):
        piv = col + int(np.argmax(np.abs(A[col:, col])))
        if A[piv, col] == 0.0:
            raise np.linalg.LinAlgError("singular system")
        if piv != col:
            A[[col, piv]] = A[[piv, col]]
            B[[col, piv]] = B[[piv, col]]
        for row in range(col + 1, n):
            f = A[row, col] / A[col, col]
            if f != 0.0:
                A[row, col:] -= f * A[col, col:]
                B[row] -= f * B[col]
    x = np.zeros_like(B)
    for row in range(n - 1, -1, -1):
        x[row] = (B[row] - A[row, row + 1:] @ x[row + 1:]) / A[row, row]
    return x[:, 0] if squeeze else x


def least_squares(X, y, ridge: float = 0.0) -> np.ndarray:
    """argmin_w ||y - Xw||^2 + ridge ||w||^2 through the normal equations."""
    X = np.array(X, dtype=np.float64)
    y = np.array(y, dtype=np.float64)
    A = X.T @ X + ridge * np.eye(X.shape[1])
    return solve_gauss(A, X.T @ y)


def gaussian_risk_closed_form(pred_vec, true_vec) -> float:
    """Excess squared-loss risk of a linear predictor under x ~ N(0, I)."""
    diff = np.asarray(pred_vec, dtype=np.float64) - np.asarray(true_vec, dtype=np.float64)
    return float(diff @ diff)


def mlp_forward(weights, biases, activation: str, x) -> np.ndarray:
    """Straight-line forward pass with explicit loops over units."""
    acts = {
        "tanh": math.tanh,
        "relu": lambda z: z if z > 0 else 0.0,
        "identity": lambda z: z,
    }
    act = acts[activation]
    h = [float(v) for v in np.asarray(x).ravel()]
    for W, b in zip(weights, biases):
        out = []
        for i in range(W.shape[0]):
            z = float(b[i])
            for j in range(W.shape[1]):
                z += float(W[i, j]) * h[j]
            out.append(act(z))
        h = out
    return np.array(h)


def naive_mean_rows(rows) -> np.ndarray:
    rows = [np.asarray(r, dtype=np.float64) for r in rows]
    acc = [0.0] * rows[0].shape[0]
    for r in rows:
        for j, v in enumerate(r):
            acc[j] += float(v)
    return np.array(acc) / len(rows)


def softmax_entropy_hp(values, digits: int = 50) -> float:
    """sum p log p of softmax(values) in high-precision decimal arithmetic."""
    ctx = decimal.Context(prec=digits)
    vals = [ctx.create_decimal(repr(float(v))) for v in values]
    top = max(vals)
    exps = [ctx.exp(ctx.subtract(v, top)) for v in vals]
    total = sum(exps, ctx.create_decimal(0))
    out = ctx.create_decimal(0)
    for e in exps:
        p = ctx.divide(e, total)
        out = ctx.add(out, ctx.multiply(p, ctx.ln(p)))
    return float(out)
