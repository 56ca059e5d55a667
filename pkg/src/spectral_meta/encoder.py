"""Multilayer affine encoder with reverse-mode gradients and simple optimizers."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad

ACTIVATIONS = ("tanh", "relu", "identity")


@dataclass
class EncoderParams:
    weights: list
    biases: list
    activation: str = "tanh"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("need one bias per weight matrix and at least one layer")
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.ndim != 2 or b.shape != (W.shape[0],):
                raise ValueError(f"layer {i}: weight {W.shape} and bias {b.shape} disagree")
            if i and W.shape[1] != self.weights[i - 1].shape[0]:
                raise ValueError(f"layer {i} input {W.shape[1]} != previous output "
                                 f"{self.weights[i - 1].shape[0]}")
            if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {i} has non-finite parameters")

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def dims(self) -> list:
        return [self.input_dim] + [W.shape[0] for W in self.weights]

    def arrays(self) -> list:
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    def with_arrays(self, arrays) -> "EncoderParams":
        arrays = list(arrays)
        return EncoderParams([np.array(a) for a in arrays[0::2]],
                             [np.array(a) for a in arrays[1::2]], self.activation)

    def copy(self) -> "EncoderParams":
        return self.with_arrays(self.arrays())


def init_encoder(rng: np.random.Generator, dims=(16, 32, 8), activation: str = "tanh") -> EncoderParams:
    """Glorot-uniform weights, zero biases."""
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return EncoderParams(weights, biases, activation)


def embed(tensors, x, activation: str) -> ad.Tensor:
    """Forward pass in tape land. ``tensors`` alternates weight, bias; x is (..., n, d)."""
    act = ad.ACTIVATIONS[activation]
    h = ad.const(x)
    for W, b in zip(tensors[0::2], tensors[1::2]):
        h = act(ad.matmul(h, ad.swap_last(W)) + ad.reshape(b, b.shape[:-1] + (1, b.shape[-1])))
    return h


@dataclass
class GradientTape:
    params: list
    inputs: ad.Tensor
    output: ad.Tensor
    activation: str
    squeeze: bool = False


@dataclass
class EncoderGradients:
    weights: list
    biases: list
    input: np.ndarray

    def arrays(self) -> list:
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out


def forward(params: EncoderParams, x):
    """Embed one vector (d,) or a batch (n, d); returns (embedding, tape)."""
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    X = x[None, :] if squeeze else x
    if X.ndim != 2 or X.shape[1] != params.input_dim:
        raise ValueError(f"input of shape {x.shape} does not match input_dim {params.input_dim}")
    tensors = [ad.leaf(a) for a in params.arrays()]
    xin = ad.leaf(X)
    out = embed(tensors, xin, params.activation)
    emb = out.value[0] if squeeze else out.value
    return emb.copy(), GradientTape(tensors, xin, out, params.activation, squeeze)


def backward(tape: GradientTape, upstream) -> EncoderGradients:
    """Replay the tape with the cotangent ``upstream`` (same shape as the embedding)."""
    up = np.asarray(upstream, dtype=np.float64)
    if tape.squeeze:
        up = up[None, :]
    if up.shape != tape.output.shape:
        raise ValueError(f"upstream shape {np.asarray(upstream).shape} does not match "
                         f"embedding shape {tape.output.shape}")
    grads = ad.grad(tape.output, tape.params + [tape.inputs], seed=up)
    vals = [g.value for g in grads]
    gin = vals[-1][0] if tape.squeeze else vals[-1]
    return EncoderGradients(vals[:-1:2], vals[1:-1:2], gin)


# optimizers -------------------------------------------------------------------

@dataclass(frozen=True)
class SGD:
    lr: float


@dataclass
class Adam:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def apply_update(arrays, gradients, rule):
    """Return updated copies of ``arrays``; Adam keeps its moments on ``rule``."""
    arrays = [np.asarray(a, dtype=np.float64) for a in arrays]
    gradients = [np.asarray(g, dtype=np.float64) for g in gradients]
    if len(arrays) != len(gradients) or any(a.shape != g.shape for a, g in zip(arrays, gradients)):
        raise ValueError("parameter and gradient shapes differ")
    if isinstance(rule, SGD):
        return [a - rule.lr * g for a, g in zip(arrays, gradients)]
    if isinstance(rule, Adam):
        if not rule.m:
            rule.m = [np.zeros_like(a) for a in arrays]
            rule.v = [np.zeros_like(a) for a in arrays]
        rule.t += 1
        bc1 = 1.0 - rule.beta1 ** rule.t
        bc2 = 1.0 - rule.beta2 ** rule.t
        out = []
        for i, (a, g) in enumerate(zip(arrays, gradients)):
            rule.m[i] = rule.beta1 * rule.m[i] + (1.0 - rule.beta1) * g
            rule.v[i] = rule.beta2 * rule.v[i] + (1.0 - rule.beta2) * g * g
            mhat = rule.m[i] / bc1
            vhat = rule.v[i] / bc2
            out.append(a - rule.lr * mhat / (np.sqrt(vhat) + rule.eps))
        return out
    raise TypeError(f"unknown update rule {rule!r}")


def update_encoder(params: EncoderParams, grads: EncoderGradients, rule) -> EncoderParams:
    return params.with_arrays(apply_update(params.arrays(), grads.arrays(), rule))


# checkpoints ------------------------------------------------------------------

def save_checkpoint(params: EncoderParams, path) -> None:
    """Flat CSV: 4 header lines then one value per line, layer-major (W row-major, then b)."""
    lines = [
        "format,spectral_meta_encoder_v1",
        "dims," + ",".join(str(d) for d in params.dims),
        f"activation,{params.activation}",
        f"count,{sum(a.size for a in params.arrays())}",
    ]
    for a in params.arrays():
        lines += [format(float(x), ".17g") for x in a.ravel()]
    Path(path).write_text("\n".join(lines) + "\n")


def load_checkpoint(path) -> EncoderParams:
    lines = Path(path).read_text().splitlines()
    if len(lines) < 4 or not lines[0].startswith("format,"):
        raise ValueError(f"{path}: missing checkpoint header")
    dims = [int(x) for x in lines[1].split(",")[1:]]
    activation = lines[2].split(",", 1)[1]
    count = int(lines[3].split(",", 1)[1])
    values = np.array([float(x) for x in lines[4:] if x.strip()])
    if values.size != count:
        raise ValueError(f"{path}: expected {count} values, found {values.size}")
    weights, biases, pos = [], [], 0
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        weights.append(values[pos:pos + fan_in * fan_out].reshape(fan_out, fan_in))
        pos += fan_in * fan_out
        biases.append(values[pos:pos + fan_out].copy())
        pos += fan_out
    return EncoderParams(weights, biases, activation)
