"""Dense SVD and the spectral scalars built on it (condition number, norms, entropy).

Matrices are plain 2-D float64 numpy arrays. The SVD is a one-sided cyclic
Jacobi (Hestenes) iteration, which keeps small singular values accurate to
high relative precision on column-graded matrices.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

KAPPA_FLOOR = 1e-12
TIE_RTOL = 1e-9
_EPS = np.finfo(np.float64).eps
_MAX_SWEEPS = 80


class DomainError(ValueError):
    """Raised when a matrix contains non-finite entries or has an invalid shape."""


@dataclass(frozen=True)
class SvdResult:
    u: np.ndarray
    sigma: np.ndarray
    v: np.ndarray

    @property
    def rank_dim(self) -> int:
        return self.sigma.shape[0]

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.sigma) @ self.v.T


def as_matrix(M) -> np.ndarray:
    A = np.array(M, dtype=np.float64)
    if A.ndim == 1:
        A = A[None, :]
    if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
        raise DomainError(f"expected a non-empty 2-D matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise DomainError("matrix has non-finite entries")
    return A


def _complete_basis(U: np.ndarray, filled: np.ndarray) -> None:
    """Replace columns of U where ``filled`` is False by unit vectors orthogonal to the rest."""
    m = U.shape[0]
    for j in np.flatnonzero(~filled):
        for e in range(m):
            cand = np.zeros(m)
            cand[e] = 1.0
            for i in np.flatnonzero(filled):
                cand -= (U[:, i] @ cand) * U[:, i]
            for i in np.flatnonzero(filled):  # second pass for orthogonality
                cand -= (U[:, i] @ cand) * U[:, i]
            nrm = np.linalg.norm(cand)
            if nrm > 0.5:
                U[:, j] = cand / nrm
                filled[j] = True
                break


def _jacobi_tall(A: np.ndarray):
    """One-sided Jacobi on a matrix with rows >= cols. Returns (U, sigma, V) unsorted."""
    m, n = A.shape
    cols = A.T.copy()  # row j of ``cols`` is column j of A
    V = np.eye(n)
    tol = max(m, 2) * _EPS
    for _ in range(_MAX_SWEEPS):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                ap = cols[p]
                aq = cols[q]
                alpha = ap @ ap
                beta = aq @ aq
                gamma = ap @ aq
                if gamma == 0.0 or abs(gamma) <= tol * np.sqrt(alpha * beta):
                    continue
                rotated = True
                if abs(beta - alpha) > 2e150 * abs(gamma):
                    t = gamma / (beta - alpha)  # 1/(2 zeta) without forming zeta
                else:
                    zeta = (beta - alpha) / (2.0 * gamma)
                    t = np.copysign(1.0, zeta) / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                new_p = c * ap - s * aq
                new_q = s * ap + c * aq
                cols[p] = new_p
                cols[q] = new_q
                vp = V[:, p].copy()
                V[:, p] = c * vp - s * V[:, q]
                V[:, q] = s * vp + c * V[:, q]
        if not rotated:
            break
    sigma = np.sqrt(np.einsum("ij,ij->i", cols, cols))
    U = np.zeros((m, n))
    # columns at rounding-noise level carry no direction; complete them instead
    filled = sigma > max(m, n) * _EPS * (sigma.max() if sigma.size else 0.0)
    U[:, filled] = (cols[filled] / sigma[filled, None]).T
    if not np.all(filled):
        _complete_basis(U, filled)
    return U, sigma, V


def svd(M) -> SvdResult:
    """Thin SVD with descending singular values and a deterministic sign convention.

    The first non-negligible entry of every left singular vector is made
    non-negative (the paired right vector flips with it).
    """
    A = as_matrix(M)
    m, n = A.shape
    if m >= n:
        U, sigma, V = _jacobi_tall(A)
    else:
        V, sigma, U = _jacobi_tall(A.T)
    order = np.argsort(-sigma, kind="stable")
    U = U[:, order]
    V = V[:, order]
    sigma = sigma[order]
    for j in range(sigma.shape[0]):
        col = U[:, j]
        idx = np.flatnonzero(np.abs(col) > 1e-12)
        if idx.size and col[idx[0]] < 0:
            U[:, j] = -col
            V[:, j] = -V[:, j]
    return SvdResult(u=U, sigma=sigma, v=V)


def singular_values(M) -> np.ndarray:
    return svd(M).sigma


def _kappa_from_sigma(sigma: np.ndarray, k_rank: int | None, floor: float):
    r = sigma.shape[0]
    k = r if k_rank is None else int(k_rank)
    if not 1 <= k <= r:
        raise DomainError(f"k_rank={k} outside [1, {r}]")
    s1, sk = sigma[0], sigma[k - 1]
    degenerate = bool(sk < floor) or sk == 0.0
    denom = max(sk, floor)
    if denom == 0.0:
        return np.inf, True
    return float(s1 / denom), degenerate


def condition_number(M, k_rank: int | None = None, *, floor: float = KAPPA_FLOOR,
                     with_flag: bool = False):
    """sigma_1 / sigma_k, with sigma_k floored at ``floor``.

    ``k_rank`` defaults to min(rows, cols). With ``with_flag`` the return value
    is ``(kappa, degenerate)`` where ``degenerate`` marks a floored sigma_k.
    Passing ``floor=0`` gives the raw ratio (``inf`` on an exact zero).
    """
    kappa, degenerate = _kappa_from_sigma(singular_values(M), k_rank, floor)
    return (kappa, degenerate) if with_flag else kappa


def frobenius_norm(M) -> float:
    A = as_matrix(M)
    scale = np.max(np.abs(A))
    if scale == 0.0:
        return 0.0
    return float(scale * np.sqrt(np.sum((A / scale) ** 2)))


def _softmax(x: np.ndarray) -> np.ndarray:
    z = np.exp(x - np.max(x))
    return z / z.sum()


def entropy_of_sigma(sigma: np.ndarray) -> float:
    p = _softmax(np.asarray(sigma, dtype=np.float64))
    logp = np.log(p)
    return float(np.sum(p * logp))


def singular_entropy(M) -> float:
    """Negative entropy sum(p log p) of the softmax of the singular values."""
    return entropy_of_sigma(singular_values(M))


def has_tie(sigma: np.ndarray, i: int, rtol: float = TIE_RTOL) -> bool:
    scale = max(sigma[0], np.finfo(float).tiny)
    for j in (i - 1, i + 1):
        if 0 <= j < sigma.shape[0] and abs(sigma[j] - sigma[i]) <= rtol * scale:
            return True
    return False


def singular_value_gradient(M, i: int, *, with_flag: bool = False):
    """Gradient of the i-th (0-based) singular value: u_i v_i^T.

    On a repeated singular value this is a subgradient taken from the
    deterministic SVD basis; ``with_flag`` additionally returns whether a tie
    was detected.
    """
    res = svd(M)
    if not 0 <= i < res.rank_dim:
        raise DomainError(f"singular value index {i} outside [0, {res.rank_dim})")
    G = np.outer(res.u[:, i], res.v[:, i])
    return (G, has_tie(res.sigma, i)) if with_flag else G


def write_matrix_csv(M, path) -> None:
    A = as_matrix(M)
    with open(Path(path), "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for row in A:
            writer.writerow([format(float(x), ".17g") for x in row])


def read_matrix_csv(path) -> np.ndarray:
    with open(Path(path), newline="") as fh:
        rows = [[float(x) for x in row] for row in csv.reader(fh) if row]
    return as_matrix(rows)
