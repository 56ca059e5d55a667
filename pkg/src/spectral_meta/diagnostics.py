"""Per-step condition-number traces, seed-only episode archives and the
frozen-encoder recomputation of the predictor matrix."""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import linalg
from .tasks import Episode

TRACE_HEADER = ("step", "kappa_wn", "frob_wn", "accuracy", "loss")


class IntegrityError(RuntimeError):
    pass


@dataclass(frozen=True)
class TraceRecord:
    step: int
    kappa_wn: float
    frob_wn: float
    query_accuracy: float
    loss: float
    degenerate: bool = False


@dataclass
class Trace:
    records: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def column(self, name: str) -> np.ndarray:
        name = "query_accuracy" if name == "accuracy" else name
        return np.array([getattr(r, name) for r in self.records], dtype=np.float64)

    def track(self, step: int, W_N, accuracy: float = float("nan"), loss: float = float("nan")) -> TraceRecord:
        W = linalg.as_matrix(W_N)
        if W.size == 0:
            raise ValueError("empty predictor matrix")
        kappa, degenerate = linalg.condition_number(W, with_flag=True)
        rec = TraceRecord(int(step), kappa, linalg.frobenius_norm(W), float(accuracy), float(loss),
                          degenerate)
        self.records.append(rec)
        return rec


def track(trace: Trace, step: int, W_N, extras: dict | None = None) -> TraceRecord:
    extras = extras or {}
    return trace.track(step, W_N, extras.get("accuracy", float("nan")), extras.get("loss", float("nan")))


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def export_csv(trace: Trace, path) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for r in trace:
            w.writerow([str(r.step), _fmt(r.kappa_wn), _fmt(r.frob_wn), _fmt(r.query_accuracy), _fmt(r.loss)])


def read_csv(path) -> Trace:
    with open(Path(path), newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != TRACE_HEADER:
        raise ValueError(f"{path}: unexpected trace header")
    recs = [TraceRecord(int(r[0]), float(r[1]), float(r[2]), float(r[3]), float(r[4])) for r in rows[1:]]
    return Trace(recs)


# episode archive ---------------------------------------------------------------

def episode_digest(ep: Episode) -> str:
    h = hashlib.sha256()
    for a in (ep.support_x, ep.support_y, ep.query_x, ep.query_y):
        h.update(np.ascontiguousarray(a).tobytes())
    return h.hexdigest()[:16]


@dataclass
class EpisodeArchive:
    """Keeps the seed keys of every training episode plus a short digest.

    ``sampler(keys) -> Episode`` regenerates an episode from its keys.
    """

    sampler: object
    keys: list = field(default_factory=list)
    digests: list = field(default_factory=list)

    def __len__(self):
        return len(self.keys)

    def append(self, keys, episode: Episode | None = None) -> None:
        keys = tuple(int(k) for k in keys)
        ep = self.sampler(keys) if episode is None else episode
        self.keys.append(keys)
        self.digests.append(episode_digest(ep))

    def episode(self, j: int) -> Episode:
        ep = self.sampler(self.keys[j])
        if episode_digest(ep) != self.digests[j]:
            raise IntegrityError(f"archived episode {j} (keys {self.keys[j]}) does not replay identically")
        return ep

    def select(self, m: int) -> list:
        """Indices of the ``m`` replayed episodes: all when m >= size, else evenly spaced."""
        n = len(self)
        if n == 0:
            raise ValueError("empty archive")
        if m >= n:
            return list(range(n))
        return [int(i) for i in np.linspace(0, n - 1, m).round().astype(int)]


def predictor_matrix(archive: EpisodeArchive, predictors, m: int = 500) -> np.ndarray:
    """Stack ``predictors(episode)`` over the replayed episodes in archive order."""
    return np.vstack([predictors(archive.episode(j)) for j in archive.select(m)])


def global_kappa(predictors, archive: EpisodeArchive, m: int = 500) -> float:
    """kappa of the predictor matrix rebuilt with a frozen model.

    ``predictors`` maps an episode to the rows the method uses for it
    (prototypes, or adapted head rows).
    """
    return linalg.condition_number(predictor_matrix(archive, predictors, m))
