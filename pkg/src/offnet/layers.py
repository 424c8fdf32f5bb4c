"""Layers with explicit forward traces and hand-written backward rules.

Every layer maps a batch ``x`` (plus an optional ``[batch, time]`` padding
mask) to an output and a trace. ``backward(trace, grad_out)`` returns the
gradient with respect to the input and a dict of parameter gradients keyed
like ``params()``. Parameters are updated in place by the optimiser, so a
layer never rebinds its arrays after construction.

Shapes: sequences are ``[batch, time, features]``; recurrent weight matrices
are ``[hidden, input]`` and ``[hidden, hidden]`` and act as ``W @ x``.
"""
from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .core import RngStream, activation, activation_backward, init_params, sigmoid

TRAIN = "train"
EVAL = "eval"


def _check_mode(mode):
    if mode not in (TRAIN, EVAL):
        raise ValueError(f"mode must be {TRAIN!r} or {EVAL!r}, got {mode!r}")


def _need_trace(trace, layer):
    if trace is None:
        raise ValueError(f"missing forward trace for layer {layer!r}; run forward first")


# ---------------------------------------------------------------------------
# recurrent cells


@dataclass
class GruCell:
    W_h: np.ndarray
    W_z: np.ndarray
    W_r: np.ndarray
    U_h: np.ndarray
    U_z: np.ndarray
    U_r: np.ndarray
    b_h: np.ndarray
    b_z: np.ndarray
    b_r: np.ndarray

    def __post_init__(self):
        hidden, inp = np.shape(self.W_h)
        for name in ("W_h", "W_z", "W_r"):
            _expect_shape(self, name, (hidden, inp))
        for name in ("U_h", "U_z", "U_r"):
            _expect_shape(self, name, (hidden, hidden))
        for name in ("b_h", "b_z", "b_r"):
            _expect_shape(self, name, (hidden,))

    @property
    def input_size(self):
        return self.W_h.shape[1]

    @property
    def hidden_size(self):
        return self.W_h.shape[0]

    @classmethod
    def create(cls, input_size, hidden_size, rng, init="glorot_uniform"):
        kw = {}
        for gate in "hzr":
            kw[f"W_{gate}"] = init_params(init, (hidden_size, input_size), rng)
        for gate in "hzr":
            kw[f"U_{gate}"] = init_params(init, (hidden_size, hidden_size), rng)
        for gate in "hzr":
            kw[f"b_{gate}"] = np.zeros(hidden_size)
        return cls(**kw)

    @classmethod
    def constant(cls, input_size, hidden_size, value=0.0, bias=None):
        """Cell with every weight set to ``value`` and every bias to ``bias`` (default ``value``)."""
        bias = value if bias is None else bias
        kw = {}
        for gate in "hzr":
            kw[f"W_{gate}"] = np.full((hidden_size, input_size), float(value))
            kw[f"U_{gate}"] = np.full((hidden_size, hidden_size), float(value))
            kw[f"b_{gate}"] = np.full(hidden_size, float(bias))
        return cls(**kw)

    def params(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class LstmCell:
    W_i: np.ndarray
    W_f: np.ndarray
    W_o: np.ndarray
    W_g: np.ndarray
    U_i: np.ndarray
    U_f: np.ndarray
    U_o: np.ndarray
    U_g: np.ndarray
    b_i: np.ndarray
    b_f: np.ndarray
    b_o: np.ndarray
    b_g: np.ndarray

    def __post_init__(self):
        hidden, inp = np.shape(self.W_i)
        for gate in "ifog":
            _expect_shape(self, f"W_{gate}", (hidden, inp))
            _expect_shape(self, f"U_{gate}", (hidden, hidden))
            _expect_shape(self, f"b_{gate}", (hidden,))

    @property
    def input_size(self):
        return self.W_i.shape[1]

    @property
    def hidden_size(self):
        return self.W_i.shape[0]

    @classmethod
    def create(cls, input_size, hidden_size, rng, init="glorot_uniform", forget_bias=1.0):
        kw = {}
        for gate in "ifog":
            kw[f"W_{gate}"] = init_params(init, (hidden_size, input_size), rng)
        for gate in "ifog":
            kw[f"U_{gate}"] = init_params(init, (hidden_size, hidden_size), rng)
        for gate in "ifog":
            kw[f"b_{gate}"] = np.zeros(hidden_size)
        kw["b_f"][:] = forget_bias
        return cls(**kw)

    @classmethod
    def constant(cls, input_size, hidden_size, value=0.0, bias=None):
        bias = value if bias is None else bias
        kw = {}
        for gate in "ifog":
            kw[f"W_{gate}"] = np.full((hidden_size, input_size), float(value))
            kw[f"U_{gate}"] = np.full((hidden_size, hidden_size), float(value))
            kw[f"b_{gate}"] = np.full(hidden_size, float(bias))
        return cls(**kw)

    def params(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _expect_shape(cell, name, shape):
    arr = getattr(cell, name)
    if np.shape(arr) != shape:
        raise ValueError(
            f"{type(cell).__name__}.{name} has shape {list(np.shape(arr))}, expected {list(shape)}"
        )
    setattr(cell, name, np.asarray(arr, dtype=np.float64))


def _check_step_dims(cell, x_t, h_prev):
    if np.shape(x_t)[-1] != cell.input_size:
        raise ValueError(
            f"input width {np.shape(x_t)[-1]} does not match cell input size {cell.input_size}"
        )
    if np.shape(h_prev)[-1] != cell.hidden_size:
        raise ValueError(
            f"state width {np.shape(h_prev)[-1]} does not match cell hidden size {cell.hidden_size}"
        )


@dataclass
class GruStepTrace:
    x_t: np.ndarray
    h_prev: np.ndarray
    z_t: np.ndarray
    r_t: np.ndarray
    h_cand: np.ndarray
    h_t: np.ndarray
    uh: np.ndarray  # U_h @ h_prev, before the reset gate


def gru_step(cell: GruCell, x_t, h_prev) -> GruStepTrace:
    """One GRU step. Works on single vectors or on ``[batch, width]`` rows."""
    x_t = np.asarray(x_t, dtype=np.float64)
    h_prev = np.asarray(h_prev, dtype=np.float64)
    _check_step_dims(cell, x_t, h_prev)
    z = sigmoid(x_t @ cell.W_z.T + h_prev @ cell.U_z.T + cell.b_z)
    r = sigmoid(x_t @ cell.W_r.T + h_prev @ cell.U_r.T + cell.b_r)
    uh = h_prev @ cell.U_h.T
    h_cand = np.tanh(x_t @ cell.W_h.T + r * uh + cell.b_h)
    h = (1.0 - z) * h_prev + z * h_cand
    return GruStepTrace(x_t, h_prev, z, r, h_cand, h, uh)


def gru_step_backward(cell: GruCell, tr: GruStepTrace, dh):
    """Backprop ``dh`` (gradient wrt ``h_t``) through one step.

    Returns ``(dx, dh_prev, grads)``.
    """
    x, hp, z, r, hc = tr.x_t, tr.h_prev, tr.z_t, tr.r_t, tr.h_cand
    x2, hp2 = np.atleast_2d(x), np.atleast_2d(hp)
    dz = dh * (hc - hp)
    dhc = dh * z
    dhp = dh * (1.0 - z)
    da_h = dhc * (1.0 - hc * hc)
    dr = da_h * tr.uh
    da_z = dz * z * (1.0 - z)
    da_r = dr * r * (1.0 - r)
    d_uh = da_h * r
    dx = da_h @ cell.W_h + da_z @ cell.W_z + da_r @ cell.W_r
    dhp = dhp + d_uh @ cell.U_h + da_z @ cell.U_z + da_r @ cell.U_r
    a_h, a_z, a_r, a_uh = (np.atleast_2d(a) for a in (da_h, da_z, da_r, d_uh))
    grads = {
        "W_h": a_h.T @ x2,
        "W_z": a_z.T @ x2,
        "W_r": a_r.T @ x2,
        "U_h": a_uh.T @ hp2,
        "U_z": a_z.T @ hp2,
        "U_r": a_r.T @ hp2,
        "b_h": a_h.sum(axis=0),
        "b_z": a_z.sum(axis=0),
        "b_r": a_r.sum(axis=0),
    }
    return dx, dhp, grads


@dataclass
class LstmStepTrace:
    x_t: np.ndarray
    h_prev: np.ndarray
    c_prev: np.ndarray
    i: np.ndarray
    f: np.ndarray
    o: np.ndarray
    g: np.ndarray
    c: np.ndarray
    tanh_c: np.ndarray
    h: np.ndarray


def lstm_step(cell: LstmCell, x_t, state):
    """One LSTM step; returns ``((h, c), trace)``."""
    h_prev, c_prev = (np.asarray(s, dtype=np.float64) for s in state)
    x_t = np.asarray(x_t, dtype=np.float64)
    _check_step_dims(cell, x_t, h_prev)
    if np.shape(c_prev) != np.shape(h_prev):
        raise ValueError(f"cell state shape {np.shape(c_prev)} != hidden shape {np.shape(h_prev)}")

    def pre(gate):
        W, U, b = (getattr(cell, f"{k}_{gate}") for k in "WUb")
        return x_t @ W.T + h_prev @ U.T + b

    i = sigmoid(pre("i"))
    f = sigmoid(pre("f"))
    o = sigmoid(pre("o"))
    g = np.tanh(pre("g"))
    c = f * c_prev + i * g
    tc = np.tanh(c)
    h = o * tc
    return (h, c), LstmStepTrace(x_t, h_prev, c_prev, i, f, o, g, c, tc, h)


def lstm_step_backward(cell: LstmCell, tr: LstmStepTrace, dh, dc):
    """Returns ``(dx, dh_prev, dc_prev, grads)``."""
    i, f, o, g, tc = tr.i, tr.f, tr.o, tr.g, tr.tanh_c
    do = dh * tc
    dc = dc + dh * o * (1.0 - tc * tc)
    da = {
        "i": dc * g * i * (1.0 - i),
        "f": dc * tr.c_prev * f * (1.0 - f),
        "o": do * o * (1.0 - o),
        "g": dc * i * (1.0 - g * g),
    }
    dc_prev = dc * f
    x2, hp2 = np.atleast_2d(tr.x_t), np.atleast_2d(tr.h_prev)
    dx = 0.0
    dhp = 0.0
    grads = {}
    for gate, d in da.items():
        dx = dx + d @ getattr(cell, f"W_{gate}")
        dhp = dhp + d @ getattr(cell, f"U_{gate}")
        d2 = np.atleast_2d(d)
        grads[f"W_{gate}"] = d2.T @ x2
        grads[f"U_{gate}"] = d2.T @ hp2
        grads[f"b_{gate}"] = d2.sum(axis=0)
    return dx, dhp, dc_prev, grads


def _run_cell(cell, seq):
    """Run a cell over ``[time, ...]`` rows from a zero state; returns outputs and traces."""
    seq = np.asarray(seq, dtype=np.float64)
    state_shape = seq.shape[1:-1] + (cell.hidden_size,)
    h = np.zeros(state_shape)
    outs, traces = [], []
    if isinstance(cell, GruCell):
        for x_t in seq:
            tr = gru_step(cell, x_t, h)
            h = tr.h_t
            outs.append(h)
            traces.append(tr)
    elif isinstance(cell, LstmCell):
        c = np.zeros(state_shape)
        for x_t in seq:
            (h, c), tr = lstm_step(cell, x_t, (h, c))
            outs.append(h)
            traces.append(tr)
    else:
        raise TypeError(f"unsupported cell type {type(cell).__name__}")
    return np.stack(outs), traces


def bidirectional_run(fwd_cell, bwd_cell, seq):
    """Run two cells over an unbatched sequence of vectors.

    Row ``t`` of the result is the forward state after reading ``seq[:t+1]``
    concatenated with the backward state after reading ``seq[t:]`` in
    reverse.
    """
    seq = np.asarray(seq, dtype=np.float64)
    if seq.ndim != 2 or seq.shape[0] == 0:
        raise ValueError("bidirectional_run needs a non-empty [time, features] sequence")
    out_f, _ = _run_cell(fwd_cell, seq)
    out_b, _ = _run_cell(bwd_cell, seq[::-1])
    return np.concatenate([out_f, out_b[::-1]], axis=-1)


# ---------------------------------------------------------------------------
# layer objects


class Layer:
    """Base class. Subclasses define ``forward`` and ``backward``."""

    regularized: tuple = ()

    def __init__(self, name):
        self.name = name

    def params(self) -> dict:
        return {}

    def forward(self, x, mask=None, mode=EVAL, rng=None):
        raise NotImplementedError

    def backward(self, trace, grad_out):
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}({self.name!r})"


class Embedding(Layer):
    """Token-id lookup into a ``[vocab, dim]`` table. Row 0 is padding."""

    def __init__(self, table, trainable=True, name="embedding"):
        super().__init__(name)
        self.table = np.array(table, dtype=np.float64)
        self.trainable = trainable

    def params(self):
        return {"table": self.table}

    def forward(self, x, mask=None, mode=EVAL, rng=None):
        ids = np.asarray(x)
        if not np.issubdtype(ids.dtype, np.integer):
            raise TypeError("embedding input must be integer token ids")
        if ids.size and (ids.min() < 0 or ids.max() >= len(self.table)):
            raise ValueError(f"token id outside [0, {len(self.table)})")
        return self.table[ids], {"ids": ids}

    def backward(self, trace, grad_out):
        _need_trace(trace, self)
        grad = np.zeros_like(self.table)
        if self.trainable:
            np.add.at(grad, trace["ids"], grad_out)
        return None, {"table": grad}


class Recurrent(Layer):
    """Unidirectional GRU or LSTM over ``[batch, time, features]``, returning all states."""

    def __init__(self, cell, name):
        super().__init__(name)
        self.cell = cell

    @classmethod
    def gru(cls, input_size, hidden_size, rng, name="gru"):
        return cls(GruCell.create(input_size, hidden_size, rng), name)

    @classmethod
    def lstm(cls, input_size, hidden_size, rng, name="lstm"):
        return cls(LstmCell.create(input_size, hidden_size, rng), name)

    @property
    def hidden_size(self):
        return self.cell.hidden_size

    def params(self):
        return self.cell.params()

    def forward(self, x, mask=None, mode=EVAL, rng=None):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 3 or x.shape[1] == 0:
            raise ValueError(f"recurrent input must be [batch, time>0, features], got {list(x.shape)}")
        out, traces = _run_cell(self.cell, np.swapaxes(x, 0, 1))
        return np.swapaxes(out, 0, 1), traces

    def backward(self, trace, grad_out):
        _need_trace(trace, self)
        cell = self.cell
        grads = {k: np.zeros_like(v) for k, v in cell.params().items()}
        B, T, _ = grad_out.shape
        dx = np.zeros((B, T, cell.input_size))
        dh_next = np.zeros((B, cell.hidden_size))
        dc_next = np.zeros((B, cell.hidden_size))
        lstm = isinstance(cell, LstmCell)
        for t in range(T - 1, -1, -1):
            dh = grad_out[:, t] + dh_next
            if lstm:
                dx[:, t], dh_next, dc_next, g = lstm_step_backward(cell, trace[t], dh, dc_next)
            else:
                dx[:, t], dh_next, g = gru_step_backward(cell, trace[t], dh)
            for k, v in g.items():
                grads[k] += v
        return dx, grads


class Bidirectional(Layer):
    """Forward and time-reversed recurrent layers with concatenated outputs."""

    def __init__(self, forward_layer: Recurrent, backward_layer: Recurrent, name="bi"):
        super().__init__(name)
        self.fwd = forward_layer
        self.bwd = backward_layer

    @classmethod
    def gru(cls, input_size, hidden_size, rng, name="bigru"):
        return cls(Recurrent.gru(input_size, hidden_size, rng, "fwd"),
                   Recurrent.gru(input_size, hidden_size, rng, "bwd"), name)

    @classmethod
    def lstm(cls, input_size, hidden_size, rng, name="bilstm"):
        return cls(Recurrent.lstm(input_size, hidden_size, rng, "fwd"),
                   Recurrent.lstm(input_size, hidden_size, rng, "bwd"), name)

    @property
    def output_size(self):
        return self.fwd.hidden_size + self.bwd.hidden_size

    def params(self):
        out = {f"fwd.{k}": v for k, v in self.fwd.params().items()}
        out.update({f"bwd.{k}": v for k, v in self.bwd.params().items()})
        return out

    def forward(self, x, mask=None, mode=EVAL, rng=None):
        x = np.asarray(x, dtype=np.float64)
        out_f, tr_f = self.fwd.forward(x)
        out_b, tr_b = self.bwd.forward(x[:, ::-1])
        return np.concatenate([out_f, out_b[:, ::-1]], axis=-1), (tr_f, tr_b)

    def backward(self, trace, grad_out):
        _need_trace(trace, self)
        hf = self.fwd.hidden_size
        dx_f, g_f = self.fwd.backward(trace[0], grad_out[..., :hf])
        dx_b, g_b = self.bwd.backward(trace[1], grad_out[..., hf:][:, ::-1])
        grads = {f"fwd.{k}": v for k, v in g_f.items()}
        grads.update({f"bwd.{k}": v for k, v in g_b.items()})
        return dx_f + dx_b[:, ::-1], grads


class ConvBranch(Layer):
    """Valid, stride-1 convolution over time with full-width filters.

    ``filters`` has shape ``[height, embed_dim, n_filters]``. Input
    ``[batch, L, embed_dim]`` maps to ``[batch, L - height + 1, n_filters]``.
    """

    regularized = ("filters",)

    def __init__(self, filters, bias, act="relu", name=None):
        filters = np.asarray(filters, dtype=np.float64)
        super().__init__(name or f"conv{filters.shape[0]}")
        if filters.ndim != 3:
            raise ValueError("filters must be [height, embed_dim, n_filters]")
        self.filters = filters
        self.bias = np.asarray(bias, dtype=np.float64)
        if self.bias.shape != (filters.shape[2],):
            raise ValueError(f"bias shape {self.bias.shape} does not match {filters.shape[2]} filters")
        self.act = act

    @classmethod
    def create(cls, height, embed_dim, n_filters, rng, act="relu"):
        return cls(init_params("glorot_uniform", (height, embed_dim, n_filters), rng),
                   np.zeros(n_filters), act)

    @property
    def height(self):
        return self.filters.shape[0]

    @property
    def n_filters(self):
        return self.filters.shape[2]

    def params(self):
        return {"filters": self.filters, "bias": self.bias}

    def forward(self, x, mask=None, mode=EVAL, rng=None):
        x = np.asarray(x, dtype=np.float64)
        h, d, _ = self.filters.shape
        if x.shape[-1] != d:
            raise ValueError(f"conv input width {x.shape[-1]} != filter width {d}")
        if x.shape[1] < h:
            raise ValueError(f"sequence length {x.shape[1]} shorter than filter height {h}")
        win = np.lib.stride_tricks.sliding_window_view(x, h, axis=1)  # [B, T, d, h]
        pre = np.einsum("btjk,kjf->btf", win, self.filters, optimize=True) + self.bias
        out = activation(self.act, pre) if self.act else pre
        return out, {"win": win, "out": out, "L": x.shape[1]}

    def backward(self, trace, grad_out):
        _need_trace(trace, self)
        g = activation_backward(self.act, trace["out"], grad_out)
        h = self.height
        B, T, _ = g.shape
        d_filters = np.einsum("btjk,btf->kjf", trace["win"], g, optimize=True)
        dx = np.zeros((B, trace["L"], self.filters.shape[1]))
        for k in range(h):
            dx[:, k:k + T] += g @ self.filters[k].T
        return dx, {"filters": d_filters, "bias": g.sum(axis=(0, 1))}


class GlobalMaxPool(Layer):
    """Maximum over the time axis; ties route gradient to the first maximum."""

    def __init__(self, name="maxpool"):
        super().__init__(name)

    def forward(self, x, mask=None, mode=EVAL, rng=None):
        x = np.asarray(x, dtype=np.float64)
        idx = np.argmax(x, axis=1)
        return np.take_along_axis(x, idx[:, None, :], axis=1)[:, 0, :], {"idx": idx, "shape": x.shape}

    def backward(self, trace, grad_out):
        _need_trace(trace, self)
        dx = np.zeros(trace["shape"])
        np.put_along_axis(dx, trace["idx"][:, None, :], grad_out[:, None, :], axis=1)
        return dx, {}


class ConvBlock(Layer):
    """Parallel conv branches, each max-pooled over time, concatenated."""

    def __init__(self, branches, name="cnn"):
        super().__init__(name)
        self.branches = list(branches)
        self.pool = GlobalMaxPool()

    regularized = ()

    @classmethod
    def create(cls, heights, embed_dim, n_filters, rng, name="cnn"):
        return cls([ConvBranch.create(h, embed_dim, n_filters, rng) for h in heights], name)

    @property
    def min_length(self):
        return max(b.height for b in self.branches)

    @property
    def output_size(self):
        return sum(b.n_filters for b in self.branches)

    @property
    def regularized_names(self):
        return tuple(f"{b.name}.{p}" for b in self.branches for p in b.regularized)

    def params(self):
        return {f"{b.name}.{k}": v for b in self.branches for k, v in b.params().items()}

    def forward(self, x, mask=None, mode=EVAL, rng=None):
        L = np.shape(x)[1]
        if L < self.min_length:
            raise ValueError(
                f"sequence length {L} is below the minimum {self.min_length} (largest filter height)"
            )
        outs, traces = [], []
        for b in self.branches:
            fmap, tr_c = b.forward(x)
            pooled, tr_p = self.pool.forward(fmap)
            outs.append(pooled)
            traces.append((tr_c, tr_p))
        return np.concatenate(outs, axis=-1), traces

    def backward(self, trace, grad_out):
        _need_trace(trace, self)
        dx = 0.0
        grads = {}
        start = 0
        for b, (tr_c, tr_p) in zip(self.branches, trace):
            g = grad_out[:, start:start + b.n_filters]
            start += b.n_filters
            g_map, _ = self.pool.backward(tr_p, g)
            dxb, gb = b.backward(tr_c, g_map)
            dx = dx + dxb
            grads.update({f"{b.name}.{k}": v for k, v in gb.items()})
        return dx, grads


def cnn_feature_extract(branches, x):
    """Feature vector for one ``[L, d]`` input: per-branch time max, concatenated."""
    x = np.asarray(x, dtype=np.float64)
    block = ConvBlock(branches)
    out, _ = block.forward(x[None])
    return out[0]


class GlobalAveragePool(Layer):
    """Mean over the time positions where ``mask == 1``."""

    def __init__(self, name="gap"):
        super().__init__(name)

    def forward(self, x, mask=None, mode=EVAL, rng=None):
        x = np.asarray(x, dtype=np.float64)
        if mask is None:
            mask = np.ones(x.shape[:2])
        mask = np.asarray(mask, dtype=np.float64)
        if mask.shape != x.shape[:2]:
            raise ValueError(f"mask shape {list(mask.shape)} does not match sequence {list(x.shape[:2])}")
        count = mask.sum(axis=1, keepdims=True)
        if np.any(count == 0):
            raise ValueError("global average pooling needs at least one unmasked position per row")
        w = mask / count
        return np.einsum("bt,btf->bf", w, x), {"w": w}

    def backward(self, trace, grad_out):
        _need_trace(trace, self)
        return trace["w"][:, :, None] * grad_out[:, None, :], {}


def global_average_pool(seq, mask):
    """Unbatched convenience form: ``seq`` is ``[time, features]``."""
    out, _ = GlobalAveragePool().forward(np.asarray(seq, dtype=np.float64)[None], np.asarray(mask)[None])
    return out[0]


class GaussianNoise(Layer):
    """Additive N(0, stddev^2) noise in train mode; identity in eval mode."""

    def __init__(self, stddev, name="noise"):
        super().__init__(name)
        if stddev < 0:
            raise ValueError(f"noise stddev must be non-negative, got {stddev}")
        self.stddev = float(stddev)

    def forward(self, x, mask=None, mode=EVAL, rng=None):
        _check_mode(mode)
        x = np.asarray(x, dtype=np.float64)
        if mode == EVAL or self.stddev == 0:
            return x, {"noise": None}
        if rng is None:
            raise ValueError("train-mode noise needs an RngStream")
        noise = rng.normal(0.0, self.stddev, x.shape)
        return x + noise, {"noise": noise}

    def backward(self, trace, grad_out):
        _need_trace(trace, self)
        return grad_out, {}


class Dropout(Layer):
    """Inverted dropout: survivors scaled by ``1 / (1 - rate)`` in train mode."""

    def __init__(self, rate, name="dropout"):
        super().__init__(name)
        if not 0 <= rate < 1:
            raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
        self.rate = float(rate)

    def forward(self, x, mask=None, mode=EVAL, rng=None):
        _check_mode(mode)
        x = np.asarray(x, dtype=np.float64)
        if mode == EVAL or self.rate == 0:
            return x, {"keep": None}
        if rng is None:
            raise ValueError("train-mode dropout needs an RngStream")
        keep = (rng.random(x.shape) >= self.rate) / (1.0 - self.rate)
        return x * keep, {"keep": keep}

    def backward(self, trace, grad_out):
        _need_trace(trace, self)
        keep = trace["keep"]
        return (grad_out if keep is None else grad_out * keep), {}


def gaussian_noise(x, stddev, mode, rng=None):
    return GaussianNoise(stddev).forward(x, mode=mode, rng=rng)[0]


def dropout(x, rate, mode, rng=None):
    return Dropout(rate).forward(x, mode=mode, rng=rng)[0]


class Dense(Layer):
    """``act(W @ x + b)`` with ``W`` of shape ``[out, in]``, applied over the last axis."""

    regularized = ("W",)

    def __init__(self, W, b, act=None, name="dense"):
        super().__init__(name)
        self.W = np.asarray(W, dtype=np.float64)
        self.b = np.asarray(b, dtype=np.float64)
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[0],):
            raise ValueError(f"dense shapes disagree: W {list(self.W.shape)}, b {list(self.b.shape)}")
        self.act = act

    @classmethod
    def create(cls, n_in, n_out, rng, act=None, init="glorot_uniform", name="dense", stddev=0.05):
        W = init_params(init, (n_out, n_in), rng, stddev=stddev)
        return cls(W, np.zeros(n_out), act, name)

    def params(self):
        return {"W": self.W, "b": self.b}

    def forward(self, x, mask=None, mode=EVAL, rng=None):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.W.shape[1]:
            raise ValueError(f"dense input width {x.shape[-1]} != kernel input size {self.W.shape[1]}")
        pre = x @ self.W.T + self.b
        out = activation(self.act, pre) if self.act else pre
        return out, {"x": x, "out": out}

    def backward(self, trace, grad_out):
        _need_trace(trace, self)
        g = activation_backward(self.act, trace["out"], grad_out)
        x = trace["x"]
        g2 = g.reshape(-1, g.shape[-1])
        x2 = x.reshape(-1, x.shape[-1])
        return g @ self.W, {"W": g2.T @ x2, "b": g2.sum(axis=0)}


def dense(x, W, b, act=None):
    return Dense(W, b, act).forward(x)[0]


def layer_backward(layer: Layer, trace, grad_out):
    """Gradient of ``layer``'s forward map: returns ``(grad_in, param_grads)``."""
    return layer.backward(trace, np.asarray(grad_out, dtype=np.float64))


def regularized_names(layer: Layer):
    """Fully-qualified names of the kernels an L2 penalty applies to."""
    if isinstance(layer, ConvBlock):
        return layer.regularized_names
    return tuple(layer.regularized)


__all__ = [
    "TRAIN", "EVAL", "RngStream",
    "GruCell", "LstmCell", "GruStepTrace", "LstmStepTrace",
    "gru_step", "gru_step_backward", "lstm_step", "lstm_step_backward", "bidirectional_run",
    "Layer", "Embedding", "Recurrent", "Bidirectional", "ConvBranch", "GlobalMaxPool", "ConvBlock",
    "GlobalAveragePool", "GaussianNoise", "Dropout", "Dense",
    "cnn_feature_extract", "global_average_pool", "gaussian_noise", "dropout", "dense",
    "layer_backward", "regularized_names",
]
