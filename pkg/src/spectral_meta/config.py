"""Flat ``key = value`` run configuration with strict validation."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .encoder import ACTIVATIONS


class ConfigError(ValueError):
    pass


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _coerce(kind, text: str):
    kind = kind.__name__ if isinstance(kind, type) else str(kind)
    if kind == "bool":
        return _parse_bool(text)
    if kind == "int":
        return int(text)
    if kind == "float":
        return float(text)
    if kind == "str":
        return text.strip()
    if kind.startswith("tuple"):
        parts = [p for p in text.replace(",", " ").split() if p]
        return tuple(float(p) if "float" in kind else int(p) for p in parts)
    raise TypeError(kind)


def parse_pairs(text: str, source: str = "<config>") -> dict:
    """``key = value`` lines; blank lines and ``#`` comments ignored."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        out[key] = value
    return out


class _Flat:
    """Mixin: build from string pairs, reject unknown keys, dump back to text."""

    @classmethod
    def from_pairs(cls, pairs: dict, base=None):
        known = {f.name: f for f in fields(cls)}
        unknown = sorted(set(pairs) - set(known))
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        values = {}
        for key, text in pairs.items():
            try:
                values[key] = _coerce(known[key].type, text)
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"{key}: {exc}") from None
        base = cls() if base is None else base
        try:
            return dataclasses.replace(base, **values)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path=None, overrides=()):
        pairs = parse_pairs(Path(path).read_text(), str(path)) if path else {}
        for item in overrides:
            if "=" not in item:
                raise ConfigError(f"override {item!r} is not key=value")
            k, v = item.split("=", 1)
            pairs[k.strip()] = v.strip()
        return cls.from_pairs(pairs)

    def dumps(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


def _check(cond: bool, key: str, msg: str):
    if not cond:
        raise ValueError(f"{key}: {msg}")


@dataclass(frozen=True)
class RunConfig(_Flat):
    method: str = "protonet"
    normalize: bool = False
    lambda_kappa: float = 0.0
    lambda_frob: float = 0.0
    lambda_entropy: float = 0.0
    proto_kappa: float = 0.0
    alpha: float = 0.01
    beta: float = 0.01
    order: str = "second"
    inner_steps_train: int = 5
    inner_steps_eval: int = 10
    n_way: int = 5
    k_shot: int = 1
    n_query: int = 15
    episodes: int = 2000
    batch: int = 4
    dim: int = 16
    hidden: int = 32
    embed_dim: int = 8
    activation: str = "tanh"
    radius: float = 4.0
    noise_std: float = 1.0
    n_classes: int = 64
    n_test_classes: int = 16
    eval_episodes: int = 200
    global_m: int = 500
    seed: int = 0
    seeds: int = 20
    out: str = "runs"

    def __post_init__(self):
        _check(self.method in ("protonet", "maml"), "method", "must be protonet or maml")
        _check(self.order in ("first", "second"), "order", "must be first or second")
        _check(self.activation in ACTIVATIONS, "activation", f"must be one of {ACTIVATIONS}")
        for key in ("lambda_kappa", "lambda_frob", "lambda_entropy", "proto_kappa", "alpha", "beta",
                    "noise_std"):
            v = getattr(self, key)
            _check(v == v and v >= 0 and v != float("inf"), key, "must be finite and >= 0")
        _check(self.radius > 0, "radius", "must be > 0")
        for key in ("n_way", "k_shot", "episodes", "batch", "dim", "hidden", "embed_dim",
                    "eval_episodes", "global_m", "seeds"):
            _check(getattr(self, key) >= 1, key, "must be >= 1")
        for key in ("n_query", "inner_steps_train", "inner_steps_eval", "seed"):
            _check(getattr(self, key) >= 0, key, "must be >= 0")
        _check(0 < self.n_test_classes < self.n_classes, "n_test_classes",
               "must leave both train and test classes")
        _check(self.n_way <= self.n_test_classes and self.n_way <= self.n_classes - self.n_test_classes,
               "n_way", "exceeds a class split")
        _check(self.n_query >= 1, "n_query", "must be >= 1")

    @property
    def dims(self) -> tuple:
        return (self.dim, self.hidden, self.embed_dim)


@dataclass(frozen=True)
class MtrConfig(_Flat):
    d: int = 10
    k: int = 3
    T: int = 20
    n1_list: tuple[int, ...] = (5, 20, 80)
    n1_fixed: int = 20
    kappa_list: tuple[float, ...] = (1.0, 10.0, 100.0)
    n2: int = 2000
    noise: float = 1.0
    n_mc: int = 20000
    seed: int = 0
    seeds: int = 20
    out: str = "runs"

    def __post_init__(self):
        _check(1 <= self.k <= self.d, "k", "must satisfy 1 <= k <= d")
        _check(self.T >= self.k, "T", "must be >= k")
        _check(self.n2 >= 1 and self.seeds >= 1, "n2", "n2 and seeds must be >= 1")
        _check(self.n_mc >= 1000, "n_mc", "must be >= 1000")
        _check(all(n >= 1 for n in self.n1_list) and self.n1_list, "n1_list", "needs positive sizes")
        _check(all(k >= 1 for k in self.kappa_list) and self.kappa_list, "kappa_list", "needs values >= 1")
        _check(self.noise >= 0, "noise", "must be >= 0")


@dataclass(frozen=True)
class Prop1Config(_Flat):
    gammas: tuple[float, ...] = (0.25, 0.5, 1.0, 2.0, 4.0)
    dims: tuple[int, ...] = (2, 5, 10)
    alpha: float = 0.1
    beta: float = 0.5
    steps: int = 50
    prefix: int = 1
    seed: int = 0
    seeds: int = 20
    out: str = "runs"

    def __post_init__(self):
        _check(all(d >= 2 for d in self.dims) and self.dims, "dims", "need d >= 2")
        _check(self.steps >= 2, "steps", "must be >= 2")
        _check(self.prefix >= 1, "prefix", "must be >= 1")
        _check(self.seeds >= 1, "seeds", "must be >= 1")


@dataclass(frozen=True)
class Prop3Config(_Flat):
    eps_list: tuple[float, ...] = (0.5, 0.1, 0.02, 0.001)
    dim: int = 3
    k_val: float = 2.0
    out: str = "runs"

    def __post_init__(self):
        _check(all(e > 0 for e in self.eps_list) and self.eps_list, "eps_list", "need eps > 0")
        _check(self.dim >= 3, "dim", "must be >= 3")
