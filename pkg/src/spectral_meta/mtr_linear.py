"""Linear multi-task representation learning: a shared d x k projection fitted
by alternating least squares over source tasks, a ridge target fit, and a
Monte-Carlo excess-risk estimate under isotropic Gaussian inputs."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .tasks import STREAM_MISC, rng_for

RIDGE = 1e-8
SWEEP_HEADER = ("n1", "T", "k", "kappa_planted", "seed", "er", "er_se")


@dataclass(frozen=True)
class LinearRepresentation:
    B: np.ndarray

    def __post_init__(self):
        k = self.B.shape[1]
        if np.max(np.abs(self.B.T @ self.B - np.eye(k))) > 1e-8:
            raise ValueError("representation columns are not orthonormal")

    @property
    def k(self) -> int:
        return self.B.shape[1]


@dataclass(frozen=True)
class ExcessRiskEstimate:
    value: float
    std_error: float
    n_montecarlo: int


@dataclass
class FitInfo:
    objective: list = field(default_factory=list)
    rounds: int = 0
    converged: bool = False
    rank_deficient: bool = False


def objective(tasks, B: np.ndarray, W: np.ndarray) -> float:
    """(1 / (T n1)) sum_t ||y_t - X_t B w_t||^2."""
    total, count = 0.0, 0
    for (X, y), w in zip(tasks, W):
        r = y - X @ (B @ w)
        total += float(r @ r)
        count += y.shape[0]
    return total / count


def _solve_w(tasks, B, info: FitInfo) -> np.ndarray:
    rows = []
    for X, y in tasks:
        Z = X @ B
        w, _, rank, _ = np.linalg.lstsq(Z, y, rcond=None)
        if rank < B.shape[1]:
            info.rank_deficient = True
        rows.append(w)
    return np.array(rows)


def _solve_b(grams, moments, W, d: int, info: FitInfo) -> np.ndarray:
    k = W.shape[1]
    A = np.zeros((d * k, d * k))
    rhs = np.zeros(d * k)
    for G, m, w in zip(grams, moments, W):
        A += np.kron(np.outer(w, w), G)
        rhs += np.kron(w, m)
    if np.linalg.cond(A) > 1e12:
        info.rank_deficient = True
        A = A + RIDGE * np.eye(d * k)
    return np.linalg.solve(A, rhs).reshape((d, k), order="F")


def _orthonormalize(B, W):
    Q, R = np.linalg.qr(B)
    signs = np.where(np.diag(R) < 0, -1.0, 1.0)
    Q, R = Q * signs, R * signs[:, None]
    return Q, W @ R.T


def _initial_b(tasks, k: int) -> np.ndarray:
    M = np.column_stack([X.T @ y for X, y in tasks])
    U, _, _ = np.linalg.svd(M, full_matrices=True)
    return U[:, :k].copy()


def fit_source(tasks, k: int, *, max_rounds: int = 500, tol: float = 1e-10):
    """Alternating least squares for min over (B, W) of the pooled squared loss.

    Returns ``(LinearRepresentation, W, FitInfo)`` with W of shape (T, k).
    """
    tasks = [(np.asarray(X, dtype=np.float64), np.asarray(y, dtype=np.float64)) for X, y in tasks]
    if not tasks:
        raise ValueError("no source tasks")
    d = tasks[0][0].shape[1]
    if not 1 <= k <= d:
        raise ValueError(f"k={k} must lie in [1, {d}]")
    if sum(X.shape[0] for X, _ in tasks) < d:
        raise ValueError("need at least d samples in total")
    info = FitInfo()
    grams = [X.T @ X for X, _ in tasks]
    moments = [X.T @ y for X, y in tasks]
    B = _initial_b(tasks, k)
    W = _solve_w(tasks, B, info)
    info.objective.append(objective(tasks, B, W))
    for r in range(max_rounds):
        B = _solve_b(grams, moments, W, d, info)
        B, W = _orthonormalize(B, W)
        W = _solve_w(tasks, B, info)
        info.objective.append(objective(tasks, B, W))
        info.rounds = r + 1
        prev, cur = info.objective[-2], info.objective[-1]
        if cur == 0.0 or abs(prev - cur) <= tol * max(abs(prev), np.finfo(float).tiny):
            info.converged = True
            break
    return LinearRepresentation(B), W, info


def fit_target(B, X, y, ridge: float = RIDGE) -> np.ndarray:
    """Ridge least squares on the embedded features X B."""
    B = B.B if isinstance(B, LinearRepresentation) else np.asarray(B)
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] < 1:
        raise ValueError("need at least one target sample")
    Z = X @ B
    return np.linalg.solve(Z.T @ Z + ridge * np.eye(B.shape[1]), Z.T @ np.asarray(y, dtype=np.float64))


def excess_risk(B_hat, w_hat, B_star, w_star, noise: float, n_mc: int, seed: int = 0,
                chunk: int = 8192) -> ExcessRiskEstimate:
    """Monte-Carlo estimate of E[(y - x.b_hat)^2 - (y - x.b_star)^2] for
    x ~ N(0, I), y = x.b_star + noise * N(0, 1).

    Chunks use derived seeds and are reduced in a fixed order.
    """
    if n_mc < 1000:
        raise ValueError("n_mc must be at least 1000")
    B_hat = B_hat.B if isinstance(B_hat, LinearRepresentation) else np.asarray(B_hat)
    delta = B_hat @ np.asarray(w_hat) - np.asarray(B_star) @ np.asarray(w_star)
    d = delta.shape[0]
    s1 = s2 = 0.0
    done, c = 0, 0
    while done < n_mc:
        m = min(chunk, n_mc - done)
        rng = rng_for(seed, STREAM_MISC, c)
        x = rng.standard_normal((m, d))
        e = noise * rng.standard_normal(m)
        proj = x @ delta
        vals = proj * proj - 2.0 * e * proj
        s1 += float(vals.sum())
        s2 += float((vals * vals).sum())
        done += m
        c += 1
    mean = s1 / n_mc
    var = max(s2 / n_mc - mean * mean, 0.0) * n_mc / (n_mc - 1)
    return ExcessRiskEstimate(mean, float(np.sqrt(var / n_mc)), n_mc)


# planted problems ----------------------------------------------------------------

@dataclass(frozen=True)
class PlantedProblem:
    B_star: np.ndarray      # (d, k) orthonormal
    W_star: np.ndarray      # (T, k)
    w_target: np.ndarray    # (k,)
    noise: float

    def source_tasks(self, rng, n1: int) -> list:
        return [_regression_draw(rng, self.B_star @ w, n1, self.noise) for w in self.W_star]

    def target_task(self, rng, n2: int):
        return _regression_draw(rng, self.B_star @ self.w_target, n2, self.noise)


def _regression_draw(rng, beta, n, noise):
    X = rng.standard_normal((n, beta.shape[0]))
    return X, X @ beta + noise * rng.standard_normal(n)


def _orthogonal(rng, n: int, k: int) -> np.ndarray:
    Q, R = np.linalg.qr(rng.standard_normal((n, k)))
    return Q * np.where(np.diag(R) < 0, -1.0, 1.0)


def planted_weights(rng, T: int, k: int, kappa: float) -> np.ndarray:
    """U diag(sigma) V^T with sigma geometric from 1 to 1/kappa, scaled to ||W||_F^2 = T."""
    if T < k or kappa < 1:
        raise ValueError("need T >= k and kappa >= 1")
    sigma = kappa ** (-np.arange(k) / max(k - 1, 1)) if k > 1 else np.ones(1)
    sigma = sigma * np.sqrt(T / np.sum(sigma ** 2))
    return (_orthogonal(rng, T, k) * sigma) @ _orthogonal(rng, k, k).T


def planted_problem(rng, d: int, k: int, T: int, kappa: float, noise: float) -> PlantedProblem:
    B = _orthogonal(rng, d, k)
    W = planted_weights(rng, T, k, kappa)
    return PlantedProblem(B, W, rng.standard_normal(k), float(noise))


@dataclass(frozen=True)
class SweepRow:
    n1: int
    T: int
    k: int
    kappa_planted: float
    seed: int
    er: float
    er_se: float


def run_trial(d: int, k: int, T: int, n1: int, n2: int, kappa: float, noise: float, seed: int,
              n_mc: int) -> SweepRow:
    # kappa is left out of the key: sweeps over kappa share every random draw
    rng = rng_for(seed, STREAM_MISC, n1)
    prob = planted_problem(rng, d, k, T, kappa, noise)
    rep, _, _ = fit_source(prob.source_tasks(rng, n1), k)
    Xt, yt = prob.target_task(rng, n2)
    w = fit_target(rep, Xt, yt)
    est = excess_risk(rep, w, prob.B_star, prob.w_target, noise, n_mc, seed)
    return SweepRow(n1, T, k, float(kappa), seed, est.value, est.std_error)


def write_sweep_csv(rows, path) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_HEADER)
        for r in rows:
            w.writerow([r.n1, r.T, r.k, format(r.kappa_planted, ".17g"), r.seed,
                        format(r.er, ".17g"), format(r.er_se, ".17g")])


def procrustes_align(B_hat: np.ndarray, B_star: np.ndarray) -> np.ndarray:
    """Rotate B_hat's columns to best match B_star (reporting only)."""
    U, _, Vt = np.linalg.svd(B_hat.T @ B_star)
    return B_hat @ (U @ Vt)
