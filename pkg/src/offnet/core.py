"""Dense float64 arithmetic, activations and seeded initialisers.

Tensors are plain ``numpy.ndarray`` objects of dtype float64. Everything in
this module is a pure function of its arguments except :class:`RngStream`,
which is a single-consumer random source.
"""
from __future__ import annotations

import numpy as np

ACTIVATIONS = ("sigmoid", "tanh", "softmax", "relu")


class RngStream:
    """Reproducible random stream keyed by ``(seed, stream_id)``.

    Backed by PCG64 seeded through a ``SeedSequence`` whose spawn key is the
    stream id, so distinct consumers drawing from the same seed never share
    draws and the sequence is identical on every platform.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self.generator.normal(loc, scale, size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.generator.uniform(low, high, size)

    def random(self, size=None):
        return self.generator.random(size)

    def permutation(self, n):
        return self.generator.permutation(n)

    def integers(self, low, high=None, size=None):
        return self.generator.integers(low, high, size)

    def spawn(self, stream_id: int) -> "RngStream":
        return RngStream(self.seed, stream_id)


def as_tensor(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def matmul(a, b) -> np.ndarray:
    """Matrix product of ``a`` [m x k] and ``b`` [k x n]."""
    a = as_tensor(a)
    b = as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(
            f"matmul dimension mismatch: {list(a.shape)} x {list(b.shape)}"
        )
    return a @ b


def sigmoid(x):
    x = as_tensor(x)
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(x, axis=-1):
    x = as_tensor(x)
    shifted = x - np.max(x, axis=axis, keepdims=True)
    ex = np.exp(shifted)
    return ex / np.sum(ex, axis=axis, keepdims=True)


def relu(x):
    return np.maximum(as_tensor(x), 0.0)


def activation(kind: str, x) -> np.ndarray:
    """Apply ``sigmoid``, ``tanh``, ``softmax`` (last axis) or ``relu``."""
    if kind == "sigmoid":
        return sigmoid(x)
    if kind == "tanh":
        return np.tanh(as_tensor(x))
    if kind == "softmax":
        return softmax(x, axis=-1)
    if kind == "relu":
        return relu(x)
    raise ValueError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")


def activation_backward(kind, out, grad_out):
    """Gradient wrt the pre-activation, given the activation output."""
    if kind is None:
        return grad_out
    if kind == "sigmoid":
        return grad_out * out * (1.0 - out)
    if kind == "tanh":
        return grad_out * (1.0 - out * out)
    if kind == "relu":
        return grad_out * (out > 0)
    if kind == "softmax":
        inner = np.sum(grad_out * out, axis=-1, keepdims=True)
        return out * (grad_out - inner)
    raise ValueError(f"unknown activation {kind!r}")


def glorot_bound(shape) -> float:
    """Half-width of the Glorot uniform interval for a kernel of ``shape``.

    For 2-D ``[fan_out, fan_in]`` kernels the fans are the two extents; for
    higher-rank kernels the leading axes are a receptive field that
    multiplies both fans (``[h, in, out]`` for convolution filters).
    """
    shape = tuple(shape)
    if len(shape) == 1:
        fan_in = fan_out = shape[0]
    elif len(shape) == 2:
        fan_out, fan_in = shape
    else:
        receptive = int(np.prod(shape[:-2]))
        fan_in = shape[-2] * receptive
        fan_out = shape[-1] * receptive
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def init_params(scheme: str, shape, rng: RngStream | None = None, *, mean=0.0, stddev=0.05):
    """Initialise a parameter tensor.

    ``scheme`` is one of ``zeros``, ``glorot_uniform`` or
    ``truncated_normal``. Truncated-normal draws further than two standard
    deviations from ``mean`` are redrawn until none remain.
    """
    shape = tuple(int(s) for s in np.atleast_1d(shape))
    if scheme == "zeros":
        return np.zeros(shape)
    if rng is None:
        raise ValueError(f"{scheme} initialisation needs an RngStream")
    if scheme == "glorot_uniform":
        bound = glorot_bound(shape)
        return rng.uniform(-bound, bound, shape)
    if scheme == "truncated_normal":
        if not stddev > 0:
            raise ValueError(f"truncated_normal stddev must be positive, got {stddev}")
        out = rng.normal(mean, stddev, shape)
        bad = np.abs(out - mean) > 2.0 * stddev
        while bad.any():
            out[bad] = rng.normal(mean, stddev, int(bad.sum()))
            bad = np.abs(out - mean) > 2.0 * stddev
        return out
    raise ValueError(f"unknown init scheme {scheme!r}")
