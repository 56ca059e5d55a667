"""Episodic task sources: Gaussian class families, CSV feature pools, the
linear-regression meta-task model and the two-task constructive example."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

# stream ids for seed derivation
STREAM_TRAIN = 0
STREAM_TEST = 1
STREAM_INIT = 2
STREAM_FAMILY = 3
STREAM_MISC = 4


def split_seed(master: int, *keys: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=int(master), spawn_key=tuple(int(k) for k in keys))


def rng_for(master: int, *keys: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(split_seed(master, *keys)))


class DatasetError(ValueError):
    pass


class CapacityError(ValueError):
    pass


@dataclass
class Episode:
    support_x: np.ndarray
    support_y: np.ndarray
    query_x: np.ndarray
    query_y: np.ndarray
    n_way: int
    k_shot: int
    n_query: int
    classes: tuple = ()
    support_ids: np.ndarray | None = None
    query_ids: np.ndarray | None = None

    def __post_init__(self):
        if self.support_x.shape[0] != self.n_way * self.k_shot:
            raise ValueError("support size does not match n_way * k_shot")
        if self.query_x.shape[0] != self.n_way * self.n_query:
            raise ValueError("query size does not match n_way * n_query")
        for ys in (self.support_y, self.query_y):
            if ys.size and (ys.min() < 0 or ys.max() >= self.n_way):
                raise ValueError("labels outside [0, n_way)")
        if np.any(np.bincount(self.support_y, minlength=self.n_way) != self.k_shot):
            raise ValueError("support is not balanced")

    @property
    def dim(self) -> int:
        return self.support_x.shape[1]

    def same_as(self, other: "Episode") -> bool:
        return (np.array_equal(self.support_x, other.support_x)
                and np.array_equal(self.query_x, other.query_x)
                and np.array_equal(self.support_y, other.support_y)
                and np.array_equal(self.query_y, other.query_y))


def _check_shape(n_way, k_shot, n_query, available):
    if n_way < 1 or k_shot < 1 or n_query < 0:
        raise ValueError(f"invalid episode shape n_way={n_way} k_shot={k_shot} n_query={n_query}")
    if n_way > available:
        raise ValueError(f"n_way={n_way} exceeds the {available} available classes")


@dataclass(frozen=True)
class GaussianFamily:
    """Classes are isotropic Gaussians around means on a sphere of radius ``radius``."""

    dim: int = 16
    radius: float = 4.0
    noise_std: float = 1.0
    n_classes: int = 64
    seed: int = 0
    n_test_classes: int = 16

    def __post_init__(self):
        if self.radius <= 0 or self.noise_std < 0 or self.dim < 1:
            raise ValueError("need dim >= 1, radius > 0 and noise_std >= 0")
        if not 0 <= self.n_test_classes < self.n_classes:
            raise ValueError("n_test_classes must leave at least one training class")

    @cached_property
    def means(self) -> np.ndarray:
        rng = rng_for(self.seed, STREAM_FAMILY)
        z = rng.standard_normal((self.n_classes, self.dim))
        return self.radius * z / np.linalg.norm(z, axis=1, keepdims=True)

    def classes(self, split: str = "all") -> np.ndarray:
        cut = self.n_classes - self.n_test_classes
        if split == "train":
            return np.arange(cut)
        if split == "test":
            return np.arange(cut, self.n_classes)
        return np.arange(self.n_classes)

    def draw(self, cls: int, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.means[cls] + self.noise_std * rng.standard_normal((n, self.dim))

    def export_pool(self, path, per_class: int, rng: np.random.Generator) -> None:
        rows = []
        for c in range(self.n_classes):
            for x in self.draw(c, per_class, rng):
                rows.append((c, x))
        write_dataset(path, rows)


def sample_episode(family: GaussianFamily, n_way: int, k_shot: int, n_query: int,
                   rng: np.random.Generator, split: str = "all") -> Episode:
    pool = family.classes(split)
    _check_shape(n_way, k_shot, n_query, pool.size)
    chosen = rng.choice(pool, size=n_way, replace=False)
    sx, sy, qx, qy = [], [], [], []
    for label, cls in enumerate(chosen):
        pts = family.draw(int(cls), k_shot + n_query, rng)
        sx.append(pts[:k_shot])
        qx.append(pts[k_shot:])
        sy += [label] * k_shot
        qy += [label] * n_query
    return Episode(np.vstack(sx), np.array(sy), np.vstack(qx).reshape(-1, family.dim),
                   np.array(qy, dtype=int), n_way, k_shot, n_query, tuple(int(c) for c in chosen))


# CSV feature pools --------------------------------------------------------------

def write_dataset(path, rows) -> None:
    rows = list(rows)
    d = len(rows[0][1])
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label"] + [f"f{i + 1}" for i in range(d)])
        for label, x in rows:
            w.writerow([int(label)] + [format(float(v), ".17g") for v in x])


@dataclass
class FeaturePool:
    """Labelled feature vectors grouped by class, with an episodic sampler."""

    features: dict
    dim: int
    ids: dict = field(default_factory=dict)

    @property
    def labels(self) -> list:
        return sorted(self.features)

    @property
    def size(self) -> int:
        return sum(v.shape[0] for v in self.features.values())

    def check_capacity(self, per_class: int) -> None:
        for lab in self.labels:
            n = self.features[lab].shape[0]
            if n < per_class:
                raise CapacityError(f"class {lab!r} has {n} items, episodes need {per_class}")

    def sample_episode(self, n_way: int, k_shot: int, n_query: int,
                       rng: np.random.Generator) -> Episode:
        labels = self.labels
        _check_shape(n_way, k_shot, n_query, len(labels))
        self.check_capacity(k_shot + n_query)
        chosen = rng.choice(len(labels), size=n_way, replace=False)
        sx, sy, qx, qy, sid, qid = [], [], [], [], [], []
        for new_label, li in enumerate(chosen):
            lab = labels[int(li)]
            feats = self.features[lab]
            idx = rng.permutation(feats.shape[0])[:k_shot + n_query]
            sx.append(feats[idx[:k_shot]])
            qx.append(feats[idx[k_shot:]])
            sid += [self.ids[lab][i] for i in idx[:k_shot]]
            qid += [self.ids[lab][i] for i in idx[k_shot:]]
            sy += [new_label] * k_shot
            qy += [new_label] * n_query
        return Episode(np.vstack(sx), np.array(sy), np.vstack(qx).reshape(-1, self.dim),
                       np.array(qy, dtype=int), n_way, k_shot, n_query,
                       tuple(labels[int(li)] for li in chosen), np.array(sid), np.array(qid))


def load_dataset(path) -> FeaturePool:
    """Read ``label,f1,...,fd`` rows. Labels are parsed as ints when possible."""
    path = Path(path)
    groups, ids = {}, {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0].strip() != "label" or len(header) < 2:
            raise DatasetError(f"{path}:1: header must be label,f1,...,fd")
        width = len(header)
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != width:
                raise DatasetError(f"{path}:{lineno}: expected {width} columns, got {len(row)}")
            raw = row[0].strip()
            try:
                label = int(raw)
            except ValueError:
                label = raw
            try:
                x = [float(c) for c in row[1:]]
            except ValueError as exc:
                raise DatasetError(f"{path}:{lineno}: {exc}") from None
            if not all(math.isfinite(v) for v in x):
                raise DatasetError(f"{path}:{lineno}: non-finite feature")
            groups.setdefault(label, []).append(x)
            ids.setdefault(label, []).append(lineno)
    if not groups:
        raise DatasetError(f"{path}: no data rows")
    feats = {lab: np.array(v) for lab, v in groups.items()}
    return FeaturePool(feats, width - 1, ids)


# linear-regression meta-tasks ----------------------------------------------------

@dataclass(frozen=True)
class LinearTask:
    theta: np.ndarray


def sample_linear_task(rng: np.random.Generator, d: int) -> LinearTask:
    if d < 1:
        raise ValueError("d must be >= 1")
    return LinearTask(rng.standard_normal(d))


def task_sample(task: LinearTask, rng: np.random.Generator, n: int, *,
                noise: bool = True, whiten: bool = False):
    """(X, y) with X rows ~ N(0, I) and y = X theta + N(0, 1) noise.

    ``whiten`` rescales the draw so that X^T X / n = I and X^T noise = 0 hold
    exactly: the sample average of any quadratic loss then equals its
    expectation.
    """
    d = task.theta.shape[0]
    X = rng.standard_normal((n, d))
    eps = rng.standard_normal(n) if noise else np.zeros(n)
    if whiten:
        if n < d:
            raise ValueError("whitening needs n >= d")
        Q, _ = np.linalg.qr(X)
        X = math.sqrt(n) * Q
        if noise:
            eps = eps - Q @ (Q.T @ eps)
    return X, X @ task.theta + eps


def colinear_thetas(rng: np.random.Generator, d: int, gamma: float, steps: int,
                    prefix: int = 2) -> list:
    """``prefix`` generic draws, then theta_{i+1} = gamma * theta_i."""
    thetas = [rng.standard_normal(d) for _ in range(prefix)]
    while len(thetas) < steps + 1:
        thetas.append(gamma * thetas[-1])
    return thetas


# two-task constructive example ---------------------------------------------------

@dataclass
class Prop3Construction:
    epsilon: float
    dim: int
    k_val: float
    corrected: bool
    phi_star: np.ndarray
    w_star: np.ndarray
    phi_hat: np.ndarray
    w_hat: np.ndarray
    points: np.ndarray     # (4, d)
    labels: np.ndarray     # (4,)
    task: np.ndarray       # (4,) task index of each point

    def predictions(self, phi: np.ndarray, W: np.ndarray) -> np.ndarray:
        emb = self.points @ phi
        return np.einsum("ij,ij->i", W[self.task], emb)

    @property
    def star_residuals(self) -> np.ndarray:
        return self.labels - self.predictions(self.phi_star, self.w_star)

    @property
    def hat_residuals(self) -> np.ndarray:
        return self.labels - self.predictions(self.phi_hat, self.w_hat)


def kappa_hat_closed_form(eps: float) -> float:
    root = eps * math.sqrt(eps * eps + 4.0)
    return math.sqrt((2.0 + eps * eps + root) / (2.0 + eps * eps - root))


def build_prop3(eps: float, d: int = 3, k_val: float = 2.0, corrected: bool = False) -> Prop3Construction:
    """Two tasks whose natural predictors are ill-conditioned (kappa = 1/eps)
    while a different linear representation admits predictors with kappa near 1.

    With ``corrected`` the second point of the first task uses first
    coordinate -1 - k*eps, which makes the (phi_star, w_star) pair exact; the
    default keeps 1 + k*eps and leaves a residual of 2 + 2*k*eps on that point.
    """
    if not eps > 0 or d < 3:
        raise ValueError("need eps > 0 and d >= 3")
    k = float(k_val)

    def pt(a, b, c):
        x = np.zeros(d)
        x[:3] = (a, b, c)
        return x

    first = (-1.0 - k * eps) if corrected else (1.0 + k * eps)
    points = np.array([
        pt(1.0 - k * eps, k, 1.0),
        pt(first, k, -1.0),
        pt(1.0 + k * eps, k, (k - 1.0) / eps),
        pt(-1.0 + k * eps, k, (1.0 + k) / eps),
    ])
    phi_star = np.zeros((d, 2))
    phi_star[0, 0] = phi_star[1, 1] = 1.0
    phi_hat = np.zeros((d, 2))
    phi_hat[1, 0] = phi_hat[2, 1] = 1.0
    return Prop3Construction(
        epsilon=eps, dim=d, k_val=k, corrected=corrected,
        phi_star=phi_star, w_star=np.array([[1.0, eps], [1.0, -eps]]),
        phi_hat=phi_hat, w_hat=np.array([[0.0, 1.0], [1.0, -eps]]),
        points=points, labels=np.array([1.0, -1.0, 1.0, -1.0]), task=np.array([0, 0, 1, 1]),
    )
