"""Dense ReLU network with hand-written gradients, Adam/SGD updates and binary checkpoints.

Everything is float64 numpy; no ML framework involved.

Checkpoint layout (little-endian throughout):
    bytes 0..3    magic b"SVQN"
    bytes 4..7    uint32 format version (currently 1)
    bytes 8..11   uint32 length H of the JSON header
    bytes 12..    H bytes of UTF-8 JSON: {"dtype": "<f8", "layer_sizes": [...],
                  "seed": int|null, "counters": {...}}
    then          per layer, weight matrix (out x in, row-major) followed by the
                  bias vector, all float64 little-endian
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

MAGIC = b"SVQN"
FORMAT_VERSION = 1


class CheckpointError(Exception):
    """Raised for unreadable or incompatible parameter files."""


class MlpParams:
    """Weights and biases of an affine-ReLU stack with a linear output layer."""

    __slots__ = ("weights", "biases")

    def __init__(self, weights: list[np.ndarray], biases: list[np.ndarray]):
        self.weights = weights
        self.biases = biases

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (self.weights[0].shape[1],) + tuple(w.shape[0] for w in self.weights)

    @property
    def num_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def copy(self) -> "MlpParams":
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])


def params_equal(a: MlpParams, b: MlpParams) -> bool:
    """Bit-exact equality of two parameter sets."""
    return len(a.weights) == len(b.weights) and all(
        np.array_equal(wa, wb) and np.array_equal(ba, bb)
        for wa, wb, ba, bb in zip(a.weights, b.weights, a.biases, b.biases)
    )


def init_network(layer_sizes: tuple[int, ...], seed: int) -> MlpParams:
    """Seeded uniform init scaled by 1/sqrt(fan_in); biases zero."""
    if len(layer_sizes) < 2 or any(n < 1 for n in layer_sizes):
        raise ValueError(f"invalid layer sizes: {layer_sizes}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases)


def _forward_cached(p: MlpParams, x: np.ndarray) -> list[np.ndarray]:
    """Activations per layer for a (batch, in) input; last entry is the linear output."""
    acts = [x]
    h = x
    last = len(p.weights) - 1
    for k, (w, b) in enumerate(zip(p.weights, p.biases)):
        z = h @ w.T + b
        h = z if k == last else np.maximum(z, 0.0)
        acts.append(h)
    return acts


def forward(p: MlpParams, x: np.ndarray) -> np.ndarray:
    """Network output for a single feature vector or a (batch, in) matrix."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != p.weights[0].shape[1]:
        raise ValueError(f"input dimension {x.shape[1]} != {p.weights[0].shape[1]}")
    out = _forward_cached(p, x)[-1]
    return out[0] if single else out


def backward_td(
    p: MlpParams, x: np.ndarray, a_idx: np.ndarray, y: np.ndarray
) -> tuple[list[tuple[np.ndarray, np.ndarray]], float]:
    """Gradients of the mean squared TD error over a batch, plus the loss.

    Only the a_idx-th output (0-based) of each sample carries a residual.
    Returns ([(dW, db) per layer], loss).
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    a_idx = np.asarray(a_idx, dtype=np.intp)
    y = np.asarray(y, dtype=np.float64)
    n = x.shape[0]
    if n == 0:
        raise ValueError("empty batch")

    acts = _forward_cached(p, x)
    q_sel = acts[-1][np.arange(n), a_idx]
    residual = q_sel - y
    loss = float(np.mean(residual**2))

    # Output delta: dL/dq has 2*residual/n only at the selected columns.
    delta = np.zeros_like(acts[-1])
    delta[np.arange(n), a_idx] = 2.0 * residual / n

    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(p.weights)  # type: ignore[list-item]
    for k in range(len(p.weights) - 1, -1, -1):
        grads[k] = (delta.T @ acts[k], delta.sum(axis=0))
        if k > 0:
            delta = (delta @ p.weights[k]) * (acts[k] > 0.0)
    return grads, loss


class AdamState:
    """First/second moment accumulators and step counter for Adam."""

    __slots__ = ("m", "v", "t", "lr", "beta1", "beta2", "eps")

    def __init__(
        self,
        p: MlpParams,
        lr: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.m = [np.zeros_like(w) for w in p.weights] + [np.zeros_like(b) for b in p.biases]
        self.v = [np.zeros_like(w) for w in p.weights] + [np.zeros_like(b) for b in p.biases]
        self.t = 0
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps


def adam_step(
    p: MlpParams, grads: list[tuple[np.ndarray, np.ndarray]], st: AdamState
) -> tuple[MlpParams, AdamState]:
    """One in-place Adam update with bias correction."""
    st.t += 1
    corr1 = 1.0 - st.beta1**st.t
    corr2 = 1.0 - st.beta2**st.t
    flat = [g for g, _ in grads] + [g for _, g in grads]
    targets = p.weights + p.biases
    for i, (param, g) in enumerate(zip(targets, flat)):
        m, v = st.m[i], st.v[i]
        m *= st.beta1
        m += (1.0 - st.beta1) * g
        v *= st.beta2
        v += (1.0 - st.beta2) * (g * g)
        param -= st.lr * (m / corr1) / (np.sqrt(v / corr2) + st.eps)
    return p, st


def sgd_step(p: MlpParams, grads: list[tuple[np.ndarray, np.ndarray]], lr: float) -> MlpParams:
    """Plain gradient descent step."""
    for (gw, gb), w, b in zip(grads, p.weights, p.biases):
        w -= lr * gw
        b -= lr * gb
    return p


def save_params(
    path: str | Path,
    p: MlpParams,
    seed: int | None = None,
    counters: dict | None = None,
) -> None:
    """Write the versioned binary checkpoint described in the module docstring."""
    header = {
        "dtype": "<f8",
        "layer_sizes": list(p.layer_sizes),
        "seed": seed,
        "counters": counters or {},
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(np.uint32(FORMAT_VERSION).tobytes())
        fh.write(np.uint32(len(blob)).tobytes())
        fh.write(blob)
        for w, b in zip(p.weights, p.biases):
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_params(path: str | Path) -> tuple[MlpParams, dict]:
    """Read a checkpoint; raises CheckpointError on bad magic or version."""
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a parameter checkpoint")
    version = int(np.frombuffer(raw[4:8], dtype="<u4")[0])
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: checkpoint version mismatch (got {version})")
    hlen = int(np.frombuffer(raw[8:12], dtype="<u4")[0])
    try:
        header = json.loads(raw[12 : 12 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header: {exc}") from exc
    sizes = header.get("layer_sizes", [])
    offset = 12 + hlen
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        nw = fan_in * fan_out * 8
        w = np.frombuffer(raw[offset : offset + nw], dtype="<f8").reshape(fan_out, fan_in)
        offset += nw
        b = np.frombuffer(raw[offset : offset + fan_out * 8], dtype="<f8")
        offset += fan_out * 8
        weights.append(w.copy())
        biases.append(b.copy())
    if offset != len(raw) or not weights:
        raise CheckpointError(f"{path}: truncated or oversized parameter data")
    return MlpParams(weights, biases), header
