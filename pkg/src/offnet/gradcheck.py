"""Central finite-difference gradient checking for layers and losses."""
from __future__ import annotations

import numpy as np

from .core import RngStream
from .layers import TRAIN


def numerical_grad(f, x, step=1e-5):
    """Central differences of scalar ``f()`` wrt array ``x`` (perturbed in place)."""
    grad = np.zeros_like(x, dtype=np.float64)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + step
        fp = f()
        x[i] = old - step
        fm = f()
        x[i] = old
        grad[i] = (fp - fm) / (2 * step)
    return grad


def relative_error(analytic, numeric, floor=1e-7):
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = max(np.linalg.norm(analytic), np.linalg.norm(numeric), floor)
    return float(np.linalg.norm(analytic - numeric) / denom)


def check_layer(layer, x, mask=None, mode=TRAIN, seed=0, step=1e-5, check_input=True):
    """Compare ``layer.backward`` with finite differences.

    The objective is ``sum(out * R)`` for a fixed random ``R``. Stochastic
    layers see a fresh ``RngStream(seed)`` on every forward call, so their
    noise and dropout masks stay frozen across perturbations.

    Returns ``{name: relative_error}`` with ``"input"`` for the input
    gradient when ``check_input`` is set.
    """
    def run():
        out, trace = layer.forward(x, mask, mode, RngStream(seed, 99))
        return out, trace

    out, trace = run()
    R = RngStream(seed, 7).normal(size=out.shape)
    grad_in, grads = layer.backward(trace, R)

    def objective():
        return float(np.sum(run()[0] * R))

    errors = {}
    if check_input:
        errors["input"] = relative_error(grad_in, numerical_grad(objective, x, step))
    for name, p in layer.params().items():
        errors[name] = relative_error(grads[name], numerical_grad(objective, p, step))
    return errors
