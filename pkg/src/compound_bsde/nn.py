"""Small fully connected tanh networks with hand-written reverse mode and Adam.

Layer ``l`` computes ``a @ W_l + b_l`` with ``W_l`` of shape ``(fan_in, fan_out)``;
hidden layers apply ``tanh``, the output layer is affine.  Parameters live in
one flat float64 vector so the optimizer state is a pair of flat vectors.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import NonFiniteGradient, ShapeMismatch, ValidationError


@dataclass(frozen=True)
class MlpSpec:
    input_dim: int
    output_dim: int
    hidden_widths: tuple[int, ...] = ()

    def __post_init__(self):
        widths = tuple(int(w) for w in self.hidden_widths)
        object.__setattr__(self, "hidden_widths", widths)
        if self.input_dim < 1 or self.output_dim < 1 or any(w < 1 for w in widths):
            raise ValidationError("all layer widths must be >= 1")

    @classmethod
    def default(cls, input_dim: int, output_dim: int, d1: int) -> "MlpSpec":
        return cls(input_dim, output_dim, (10 + d1, 10 + d1))

    @property
    def layer_shapes(self) -> list[tuple[int, int]]:
        dims = (self.input_dim,) + self.hidden_widths + (self.output_dim,)
        return list(zip(dims[:-1], dims[1:]))

    @property
    def n_params(self) -> int:
        return sum(i * o + o for i, o in self.layer_shapes)

    def to_dict(self) -> dict:
        return {"input_dim": self.input_dim, "output_dim": self.output_dim,
                "hidden_widths": list(self.hidden_widths)}


class ApproximatorParams:
    """Flat parameter vector with per-layer weight/bias views."""

    def __init__(self, spec: MlpSpec, flat: np.ndarray | None = None):
        self.spec = spec
        if flat is None:
            flat = np.zeros(spec.n_params)
        flat = np.asarray(flat, dtype=float)
        if flat.shape != (spec.n_params,):
            raise ShapeMismatch(f"expected {spec.n_params} parameters, got {flat.shape}")
        self.flat = flat
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        pos = 0
        for fan_in, fan_out in spec.layer_shapes:
            self.weights.append(flat[pos:pos + fan_in * fan_out].reshape(fan_in, fan_out))
            pos += fan_in * fan_out
            self.biases.append(flat[pos:pos + fan_out])
            pos += fan_out

    @property
    def size(self) -> int:
        return self.flat.size

    def copy(self) -> "ApproximatorParams":
        return ApproximatorParams(self.spec, self.flat.copy())


def init_params(spec: MlpSpec, seed: int, out: np.ndarray | None = None) -> ApproximatorParams:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.Generator(np.random.Philox(int(seed) & 0xFFFF_FFFF_FFFF_FFFF))
    params = ApproximatorParams(spec, out if out is not None else np.zeros(spec.n_params))
    for w, b in zip(params.weights, params.biases):
        limit = np.sqrt(6.0 / (w.shape[0] + w.shape[1]))
        w[...] = rng.uniform(-limit, limit, size=w.shape)
        b[...] = 0.0
    return params


def _as_batch(params: ApproximatorParams, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != params.spec.input_dim:
        raise ShapeMismatch(f"input of shape {x.shape} for input_dim {params.spec.input_dim}")
    return x, single


def forward_cached(params: ApproximatorParams, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """Forward pass keeping every layer input (needed by ``backward``)."""
    acts = [x]
    a = x
    last = len(params.weights) - 1
    for l, (w, b) in enumerate(zip(params.weights, params.biases)):
        a = a @ w + b
        if l < last:
            a = np.tanh(a)
            acts.append(a)
    return a, acts


def forward(params: ApproximatorParams, x) -> np.ndarray:
    """Evaluate on a single input vector or a ``(B, input_dim)`` batch."""
    xb, single = _as_batch(params, x)
    out, _ = forward_cached(params, xb)
    return out[0] if single else out


def backward(
    params: ApproximatorParams,
    x,
    upstream,
    cache: list[np.ndarray] | None = None,
    reduction: str = "sum",
) -> np.ndarray:
    """Gradient of ``sum_b <upstream_b, forward(x_b)>`` w.r.t. the flat parameters.

    ``reduction="mean"`` divides by the batch size instead.  Pass the ``cache``
    returned by ``forward_cached`` to skip recomputing the forward pass.
    """
    xb, single = _as_batch(params, x)
    g = np.asarray(upstream, dtype=float)
    if single:
        g = g[None, :]
    if g.shape != (xb.shape[0], params.spec.output_dim):
        raise ShapeMismatch(f"upstream of shape {g.shape}, expected {(xb.shape[0], params.spec.output_dim)}")
    if cache is None:
        _, cache = forward_cached(params, xb)
    if reduction == "mean":
        g = g / xb.shape[0]
    elif reduction != "sum":
        raise ValueError("reduction must be 'sum' or 'mean'")
    grad = ApproximatorParams(params.spec)
    for l in range(len(params.weights) - 1, -1, -1):
        a_in = cache[l]
        grad.weights[l][...] = a_in.T @ g
        grad.biases[l][...] = g.sum(axis=0)
        if l > 0:
            g = (g @ params.weights[l].T) * (1.0 - a_in * a_in)
    return grad.flat


def input_gradient(params: ApproximatorParams, x) -> np.ndarray:
    """Jacobian ``d forward / d input`` for a single input vector."""
    xb, _ = _as_batch(params, x)
    _, cache = forward_cached(params, xb)
    jac = np.eye(params.spec.output_dim)
    for l in range(len(params.weights) - 1, -1, -1):
        jac = jac @ params.weights[l].T
        if l > 0:
            jac = jac * (1.0 - cache[l][0] ** 2)
    return jac


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    k: int = 0
    lr0: float = 0.01
    decay_rate: float = 0.5
    decay_steps: int = 1_000_000_000
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, n_params: int, **kwargs) -> "AdamState":
        return cls(m=np.zeros(n_params), v=np.zeros(n_params), **kwargs)

    def learning_rate(self, k: int | None = None) -> float:
        k = self.k if k is None else k
        return self.lr0 * self.decay_rate ** (k // max(1, self.decay_steps))

    def to_dict(self) -> dict:
        return {"k": self.k, "lr0": self.lr0, "decay_rate": self.decay_rate,
                "decay_steps": self.decay_steps, "beta1": self.beta1, "beta2": self.beta2,
                "eps": self.eps}


def adam_step(params: np.ndarray, state: AdamState, gradient: np.ndarray):
    """One bias-corrected Adam update, in place.  Returns ``(params, state)``."""
    gradient = np.asarray(gradient, dtype=float)
    if gradient.shape != params.shape:
        raise ShapeMismatch(f"gradient {gradient.shape} vs params {params.shape}")
    if not np.all(np.isfinite(gradient)):
        raise NonFiniteGradient("gradient contains NaN or inf")
    lr = state.learning_rate()
    state.k += 1
    state.m *= state.beta1
    state.m += (1.0 - state.beta1) * gradient
    state.v *= state.beta2
    state.v += (1.0 - state.beta2) * gradient * gradient
    m_hat = state.m / (1.0 - state.beta1 ** state.k)
    v_hat = state.v / (1.0 - state.beta2 ** state.k)
    params -= lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params, state


# Checkpoint layout (little endian):
#   8 bytes   magic b"CBSDEPRM"
#   4 bytes   uint32 header length H
#   H bytes   UTF-8 JSON header
#   8*P bytes float64 parameter vector
CHECKPOINT_MAGIC = b"CBSDEPRM"


@dataclass
class Checkpoint:
    flat: np.ndarray
    header: dict = field(default_factory=dict)


def save_checkpoint(path, flat: np.ndarray, header: dict) -> None:
    from .io import atomic_write_bytes

    header = dict(header)
    header["n_params"] = int(flat.size)
    header["dtype"] = "<f8"
    blob = json.dumps(header, sort_keys=True).encode()
    payload = CHECKPOINT_MAGIC + struct.pack("<I", len(blob)) + blob + np.asarray(flat, "<f8").tobytes()
    atomic_write_bytes(Path(path), payload)


def load_checkpoint(path) -> Checkpoint:
    data = Path(path).read_bytes()
    if data[:8] != CHECKPOINT_MAGIC:
        raise ValidationError(f"{path} is not a parameter checkpoint")
    (n,) = struct.unpack("<I", data[8:12])
    header = json.loads(data[12:12 + n].decode())
    flat = np.frombuffer(data[12 + n:], dtype="<f8").astype(float)
    if flat.size != header["n_params"]:
        raise ValidationError("checkpoint is truncated")
    return Checkpoint(flat=flat, header=header)
